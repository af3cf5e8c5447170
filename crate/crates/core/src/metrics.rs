//! Downstream metrics. Scores are on a 0-100 scale.

use serde::{Deserialize, Serialize};

/// Trims every line and drops trailing blank lines.
pub fn normalize(text: &str) -> String {
    let mut lines: Vec<&str> = text.lines().map(str::trim).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

/// 1 when the normalized texts are equal.
pub fn exact_match(pred: &str, reference: &str) -> u8 {
    u8::from(normalize(pred) == normalize(reference))
}

/// `(1 - levenshtein / max_len) * 100` over characters of the normalized
/// texts; two empty texts score 100.
pub fn edit_similarity(pred: &str, reference: &str) -> f64 {
    let (p, r) = (normalize(pred), normalize(reference));
    let longest = p.chars().count().max(r.chars().count());
    if longest == 0 {
        return 100.0;
    }
    let distance = strsim::levenshtein(&p, &r);
    (1.0 - distance as f64 / longest as f64) * 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionScore {
    pub exact_match: f64,
    pub edit_similarity: f64,
}

/// EM and ES for code completion. Against a single-line reference only the
/// first non-empty line of the prediction counts; multi-line references are
/// compared as whole blocks.
pub fn completion_score(pred: &str, reference: &str) -> CompletionScore {
    let reference = normalize(reference);
    let pred = if reference.contains('\n') {
        normalize(pred)
    } else {
        normalize(pred)
            .lines()
            .find(|l| !l.is_empty())
            .unwrap_or("")
            .to_owned()
    };
    CompletionScore {
        exact_match: f64::from(exact_match(&pred, &reference)) * 100.0,
        edit_similarity: edit_similarity(&pred, &reference),
    }
}

/// 1 when the labels match ignoring case. `None` is an unparsed prediction.
pub fn mcq_accuracy(pred: Option<&str>, gold: &str) -> u8 {
    pred.map_or(0, |p| u8::from(p.trim().eq_ignore_ascii_case(gold.trim())))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqTally {
    pub total: usize,
    pub correct: usize,
    pub unparsed: usize,
}

impl McqTally {
    pub fn record(&mut self, pred: Option<&str>, gold: &str) -> u8 {
        let hit = mcq_accuracy(pred, gold);
        self.total += 1;
        self.correct += usize::from(hit);
        self.unparsed += usize::from(pred.is_none());
        hit
    }

    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64 * 100.0
        }
    }
}

/// Pairwise referee outcome. `forward_pref` is the rate at which the generated
/// summary won when shown first; `reverse_pref` the rate at which the reference
/// won when it was shown first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefereeVerdict {
    pub forward_pref: f64,
    pub reverse_pref: f64,
    pub samples: usize,
}

impl RefereeVerdict {
    /// Means of per-sample verdicts in [0, 1] (0.5 for an unparseable reply).
    pub fn from_samples(forward: &[f64], reverse: &[f64]) -> Option<Self> {
        if forward.is_empty() || reverse.is_empty() {
            return None;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Some(RefereeVerdict {
            forward_pref: mean(forward),
            reverse_pref: mean(reverse),
            samples: forward.len().min(reverse.len()),
        })
    }
}

pub fn comp_score(verdict: &RefereeVerdict) -> f64 {
    100.0 * 0.5 * (verdict.forward_pref + (1.0 - verdict.reverse_pref))
}
