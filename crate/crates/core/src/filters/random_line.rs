use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::budget::ratio_textual;
use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

use super::{CompressionAccounting, TextCompression};

/// Removes whole lines in a seeded uniformly random order until the remaining
/// text fits `context_tokens / target_ratio`. At least one line survives, and
/// survivors keep their original order.
pub fn random_line_compress(
    text: &str,
    target_ratio: f64,
    seed: u64,
    tokenizer: &Tokenizer,
) -> Result<TextCompression> {
    let started = Instant::now();
    if text.is_empty() {
        return Err(Error::EmptyContext);
    }
    if target_ratio.is_nan() || target_ratio < 1.0 {
        return Err(Error::Filter(format!(
            "target ratio must be >= 1, got {target_ratio}"
        )));
    }
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let context_tokens = tokenizer.count(text);
    let budget = context_tokens as f64 / target_ratio;

    let mut order: Vec<usize> = (0..lines.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut keep = vec![true; lines.len()];
    let mut remaining_lines = lines.len();
    let mut remaining_bytes = text.len();
    // Length-based profiles are recounted exactly from the byte total; others
    // sum per-line counts.
    let line_costs: Option<Vec<usize>> = (!tokenizer.is_length_based())
        .then(|| lines.iter().map(|l| tokenizer.count(l)).collect());
    let mut remaining_cost: usize = line_costs.as_ref().map_or(0, |c| c.iter().sum());
    let current = |bytes: usize, cost: usize| -> usize {
        tokenizer.count_for_len(bytes).unwrap_or(cost)
    };

    for &idx in &order {
        if remaining_lines == 1 || current(remaining_bytes, remaining_cost) as f64 <= budget {
            break;
        }
        keep[idx] = false;
        remaining_lines -= 1;
        remaining_bytes -= lines[idx].len();
        if let Some(costs) = &line_costs {
            remaining_cost -= costs[idx];
        }
    }

    let out: String = lines
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(l, _)| *l)
        .collect();
    let compressed_tokens = tokenizer.count(&out).max(1);
    let ratio = ratio_textual(context_tokens.max(1), compressed_tokens)?;
    Ok(TextCompression {
        text: out,
        ratio,
        accounting: CompressionAccounting {
            wall_latency_s: started.elapsed().as_secs_f64(),
            llm_tokens_spent: 0,
        },
    })
}
