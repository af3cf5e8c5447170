use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::context::LineDetector;
use crate::error::{Error, Result};
use crate::filters::function_chunks;
use crate::tokenizer::Tokenizer;

use super::run::{compress_context, Clients, Method, RunSettings};

pub const FIXTURE_SOURCE: &str = include_str!("../../assets/corpus/fixture.py");

const SWEEP_INSTRUCTION: &str = "Summarize what this module does.";

/// Ratio given to textual methods when the settings name none.
pub const DEFAULT_SWEEP_RATIO: f64 = 2.0;

/// Python-like source of at least `target_tokens` tokens: the fixture's import
/// header followed by its definitions drawn in seeded random order, each copy
/// renamed with a running suffix.
pub fn synthetic_corpus(target_tokens: usize, seed: u64, tokenizer: &Tokenizer) -> String {
    let chunks = function_chunks(FIXTURE_SOURCE, &LineDetector::python(), tokenizer);
    let (header, defs) = chunks.split_first().expect("fixture has chunks");
    let defs: Vec<&str> = defs.iter().map(|c| c.text.as_str()).collect();
    let rename = Regex::new(r"(?m)^((?:async\s+)?(?:def|class)\s+)(\w+)").expect("static regex");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut out = header.text.clone();
    let mut tokens = tokenizer.count(&out);
    let mut copy = 0usize;
    while tokens < target_tokens {
        let block = defs[rng.random_range(0..defs.len())];
        let renamed = rename.replace_all(block, |c: &regex::Captures| format!("{}{}_{copy}", &c[1], &c[2]));
        let mut piece = renamed.into_owned();
        if !piece.ends_with("\n\n") {
            piece.push('\n');
        }
        tokens = match tokenizer.count_for_len(out.len() + piece.len()) {
            Some(n) => n,
            None => tokens + tokenizer.count(&piece),
        };
        out.push_str(&piece);
        copy += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadCell {
    pub length: usize,
    pub method: Method,
    pub context_tokens: usize,
    pub wall_latency_s: f64,
    pub llm_tokens_spent: u64,
    pub achieved_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadTable {
    pub lengths: Vec<usize>,
    pub methods: Vec<Method>,
    /// Method-major: `cells[m * lengths.len() + l]`.
    pub cells: Vec<OverheadCell>,
}

impl OverheadTable {
    pub fn cell(&self, method: Method, length: usize) -> Option<&OverheadCell> {
        self.cells.iter().find(|c| c.method == method && c.length == length)
    }

    /// Latency rows then token rows, one column per length.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Method | Metric |");
        let mut rule = String::from("|---|---|");
        for &l in &self.lengths {
            let _ = write!(out, " {} |", length_label(l));
            rule.push_str("---:|");
        }
        let _ = writeln!(out, "\n{rule}");
        for &m in &self.methods {
            let _ = write!(out, "| {m} | latency (s) |");
            for &l in &self.lengths {
                let _ = write!(out, " {:.2} |", self.cell(m, l).map_or(f64::NAN, |c| c.wall_latency_s));
            }
            out.push('\n');
            let _ = write!(out, "| {m} | model tokens |");
            for &l in &self.lengths {
                let _ = write!(out, " {} |", self.cell(m, l).map_or(0, |c| c.llm_tokens_spent));
            }
            out.push('\n');
        }
        out
    }
}

pub fn length_label(tokens: usize) -> String {
    match tokens {
        t if t >= 1_000_000 && t % 1_000_000 == 0 => format!("{}M", t / 1_000_000),
        t if t >= 1000 && t % 1000 == 0 => format!("{}k", t / 1000),
        t if t >= 1024 && t % 1024 == 0 => format!("{}k", t / 1024),
        t => t.to_string(),
    }
}

/// Runs compression only, for every method at every length, on seeded
/// synthetic corpora.
pub fn overhead_sweep(
    lengths: &[usize],
    methods: &[Method],
    seed: u64,
    settings: &RunSettings,
    clients: &Clients,
) -> Result<OverheadTable> {
    if lengths.is_empty() || methods.is_empty() {
        return Err(Error::Config("overhead sweep needs lengths and methods".into()));
    }
    let mut settings = settings.clone();
    settings.params.target_ratio.get_or_insert(DEFAULT_SWEEP_RATIO);
    let settings = &settings;
    let corpora: Vec<String> = lengths
        .iter()
        .map(|&l| synthetic_corpus(l, seed, &settings.tokenizer))
        .collect();
    let mut cells = Vec::with_capacity(lengths.len() * methods.len());
    for &method in methods {
        for (&length, corpus) in lengths.iter().zip(&corpora) {
            let (compressed, _) = compress_context(corpus, SWEEP_INSTRUCTION, method, settings, clients)?;
            log::info!(
                "{method} @ {}: {:.3} s, {} model tokens",
                length_label(length),
                compressed.accounting.wall_latency_s,
                compressed.accounting.llm_tokens_spent
            );
            cells.push(OverheadCell {
                length,
                method,
                context_tokens: compressed.ratio.context_tokens,
                wall_latency_s: compressed.accounting.wall_latency_s,
                llm_tokens_spent: compressed.accounting.llm_tokens_spent,
                achieved_ratio: compressed.ratio.ratio,
            });
        }
    }
    Ok(OverheadTable {
        lengths: lengths.to_vec(),
        methods: methods.to_vec(),
        cells,
    })
}
