use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::metrics::RefereeVerdict;

use super::answer::{strip_reasoning, Delimiters};
use super::endpoint::{ChatRequest, ContentPart, EndpointError, ModelClient};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefereeOutcome {
    pub verdict: RefereeVerdict,
    pub tokens: u64,
    pub latency_s: f64,
    /// Replies that named neither summary.
    pub unparsed: usize,
}

fn choice_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b([AB])\b").expect("static regex"))
}

/// `Some(true)` when the first summary (A) is preferred.
pub fn parse_preference(reply: &str) -> Option<bool> {
    choice_re()
        .captures(reply.trim())
        .map(|c| &c[1] == "A")
}

/// Asks the referee `samples` times in each order. Forward shows the
/// generated summary first, reverse shows the reference first; an unreadable
/// reply counts as 0.5.
pub fn judge_summary(
    client: &dyn ModelClient,
    template: &str,
    delimiters: &[Delimiters],
    code: &str,
    generated: &str,
    reference: &str,
    samples: usize,
) -> Result<RefereeOutcome, EndpointError> {
    let samples = samples.max(1);
    let mut tokens = 0;
    let mut latency_s = 0.0;
    let mut unparsed = 0;
    let mut ask = |first: &str, second: &str| -> Result<Vec<f64>, EndpointError> {
        let prompt = template
            .replace("{code}", code)
            .replace("{first}", first)
            .replace("{second}", second);
        let request = ChatRequest::user(vec![ContentPart::text(prompt)]);
        (0..samples)
            .map(|_| {
                let resp = client.complete(&request)?;
                tokens += resp.usage.total_tokens;
                latency_s += resp.latency_s;
                let reply = strip_reasoning(&resp.content, delimiters).text;
                Ok(match parse_preference(&reply) {
                    Some(true) => 1.0,
                    Some(false) => 0.0,
                    None => {
                        unparsed += 1;
                        0.5
                    }
                })
            })
            .collect()
    };
    let forward = ask(generated, reference)?;
    let reverse = ask(reference, generated)?;
    let verdict = RefereeVerdict::from_samples(&forward, &reverse).expect("samples >= 1");
    Ok(RefereeOutcome {
        verdict,
        tokens,
        latency_s,
        unparsed,
    })
}
