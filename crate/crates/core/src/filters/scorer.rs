use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ChatRequest, ContentPart, ModelClient};

use super::Chunk;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreBatch {
    /// One score per input chunk, same order.
    pub scores: Vec<f64>,
    pub tokens_spent: u64,
}

/// Scores chunks for relevance to an instruction. Higher is more relevant.
pub trait ChunkScorer: Send + Sync {
    fn score(&self, instruction: &str, chunks: &[Chunk]) -> Result<ScoreBatch>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerSpec {
    Lexical,
    /// Relevance from the probability of a "Yes" answer on the named endpoint.
    RemoteLogprob { endpoint: String },
    /// Fixed scores keyed by chunk id.
    OracleFixture {
        #[serde(with = "id_keys")]
        scores: BTreeMap<usize, f64>,
    },
}

/// Chunk-id keys as strings, since TOML tables only have string keys.
mod id_keys {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<usize, f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(map.iter().map(|(k, v)| (k.to_string(), v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, f64>, D::Error> {
        BTreeMap::<String, f64>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| {
                k.parse()
                    .map(|id| (id, v))
                    .map_err(|_| D::Error::custom(format!("chunk id {k:?} is not an integer")))
            })
            .collect()
    }
}

impl ScorerSpec {
    pub fn build(&self, clients: &BTreeMap<String, Arc<dyn ModelClient>>) -> Result<Box<dyn ChunkScorer>> {
        Ok(match self {
            ScorerSpec::Lexical => Box::new(LexicalScorer),
            ScorerSpec::OracleFixture { scores } => Box::new(OracleScorer::new(scores.clone())),
            ScorerSpec::RemoteLogprob { endpoint } => {
                let client = clients
                    .get(endpoint)
                    .ok_or_else(|| Error::Config(format!("scorer endpoint {endpoint:?} is not defined")))?;
                Box::new(RemoteLogprobScorer::new(Arc::clone(client)))
            }
        })
    }

    pub fn spends_model_tokens(&self) -> bool {
        matches!(self, ScorerSpec::RemoteLogprob { .. })
    }
}

/// Lowercased identifier pieces: split on anything that is not alphanumeric,
/// then on camelCase and letter/digit boundaries.
pub fn subword_terms(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        let chars: Vec<char> = word.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            let boundary = (prev.is_lowercase() && cur.is_uppercase())
                || (prev.is_uppercase() && cur.is_uppercase() && next_lower)
                || (prev.is_numeric() != cur.is_numeric());
            if boundary {
                out.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        out.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
    out
}

fn log_tf(text: &str) -> HashMap<String, f64> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in subword_terms(text) {
        *counts.entry(t).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(t, n)| (t, 1.0 + (n as f64).ln()))
        .collect()
}

fn cosine(a: &HashMap<String, f64>, b: &HashMap<String, f64>) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: f64 = small
        .iter()
        .filter_map(|(t, w)| large.get(t).map(|v| w * v))
        .sum();
    let norm = |m: &HashMap<String, f64>| m.values().map(|w| w * w).sum::<f64>().sqrt();
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

/// Cosine similarity of log-scaled term-frequency vectors over subword terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl ChunkScorer for LexicalScorer {
    fn score(&self, instruction: &str, chunks: &[Chunk]) -> Result<ScoreBatch> {
        let query = log_tf(instruction);
        let scores = chunks
            .par_iter()
            .map(|c| cosine(&query, &log_tf(&c.text)))
            .collect();
        Ok(ScoreBatch {
            scores,
            tokens_spent: 0,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct OracleScorer {
    scores: BTreeMap<usize, f64>,
}

impl OracleScorer {
    pub fn new(scores: BTreeMap<usize, f64>) -> Self {
        OracleScorer { scores }
    }
}

impl ChunkScorer for OracleScorer {
    fn score(&self, _instruction: &str, chunks: &[Chunk]) -> Result<ScoreBatch> {
        let scores = chunks
            .iter()
            .map(|c| {
                self.scores
                    .get(&c.id)
                    .copied()
                    .ok_or_else(|| Error::Scorer(format!("oracle fixture has no score for chunk {}", c.id)))
            })
            .collect::<Result<_>>()?;
        Ok(ScoreBatch {
            scores,
            tokens_spent: 0,
        })
    }
}

pub(crate) const RELEVANCE_TEMPLATE: &str = include_str!("../../assets/templates/relevance.txt");

/// Asks the model whether each chunk is relevant and reads the probability of
/// "Yes" from the first generated position.
pub struct RemoteLogprobScorer {
    client: Arc<dyn ModelClient>,
    template: String,
}

impl RemoteLogprobScorer {
    pub fn new(client: Arc<dyn ModelClient>) -> Self {
        RemoteLogprobScorer {
            client,
            template: RELEVANCE_TEMPLATE.to_owned(),
        }
    }

    pub fn with_template(mut self, template: impl Into<String>) -> Self {
        self.template = template.into();
        self
    }

    fn score_one(&self, instruction: &str, chunk: &Chunk) -> Result<(f64, u64)> {
        let prompt = self
            .template
            .replace("{instruction}", instruction)
            .replace("{chunk}", &chunk.text);
        let mut request = ChatRequest::user(vec![ContentPart::text(prompt)]);
        request.max_tokens = Some(1);
        request.top_logprobs = Some(5);
        request.disable_thinking = true;
        let resp = self.client.complete(&request)?;
        let answer = |t: &str| t.trim().to_ascii_lowercase();
        let mass = |word: &str| -> f64 {
            resp.top_logprobs
                .iter()
                .filter(|a| answer(&a.token) == word)
                .map(|a| a.logprob.exp())
                .sum()
        };
        let (yes, no) = (mass("yes"), mass("no"));
        let p = if yes + no > 0.0 {
            yes / (yes + no)
        } else if answer(&resp.content).starts_with("yes") {
            1.0
        } else {
            0.0
        };
        Ok((p, resp.usage.total_tokens))
    }
}

impl ChunkScorer for RemoteLogprobScorer {
    fn score(&self, instruction: &str, chunks: &[Chunk]) -> Result<ScoreBatch> {
        let results: Vec<(f64, u64)> = chunks
            .par_iter()
            .map(|c| self.score_one(instruction, c))
            .collect::<Result<_>>()?;
        Ok(ScoreBatch {
            scores: results.iter().map(|r| r.0).collect(),
            tokens_spent: results.iter().map(|r| r.1).sum(),
        })
    }
}
