use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::budget::ratio_textual;
use crate::context::BoundaryDetector;
use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

use super::{
    assemble, function_chunks, knapsack_select, ChunkScorer, CompressionAccounting, KnapsackItem,
    TextCompression, DEFAULT_DP_CELL_CAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectiveOptions {
    pub dp_cell_cap: usize,
}

impl Default for SelectiveOptions {
    fn default() -> Self {
        SelectiveOptions {
            dp_cell_cap: DEFAULT_DP_CELL_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveCompression {
    pub output: TextCompression,
    /// Kept function-chunk ids in source order.
    pub kept: Vec<usize>,
    pub chunk_count: usize,
    /// The knapsack fell back to the greedy heuristic.
    pub approximate: bool,
}

/// Two-stage filter: function chunks are scored against the instruction and
/// ranked, then a 0-1 knapsack over the ranked chunks picks the best set that
/// fits `context_tokens / target_ratio`. Kept chunks are emitted in source
/// order.
pub fn selective_filter_compress(
    text: &str,
    instruction: &str,
    target_ratio: f64,
    scorer: &dyn ChunkScorer,
    detector: &dyn BoundaryDetector,
    tokenizer: &Tokenizer,
    options: &SelectiveOptions,
) -> Result<SelectiveCompression> {
    let started = Instant::now();
    if text.is_empty() {
        return Err(Error::EmptyContext);
    }
    if target_ratio.is_nan() || target_ratio < 1.0 {
        return Err(Error::Filter(format!("target ratio must be >= 1, got {target_ratio}")));
    }
    let context_tokens = tokenizer.count(text);
    let budget = (context_tokens as f64 / target_ratio).floor() as usize;

    let mut chunks = function_chunks(text, detector, tokenizer);
    let batch = scorer.score(instruction, &chunks)?;
    if batch.scores.len() != chunks.len() {
        return Err(Error::Scorer(format!(
            "scorer returned {} scores for {} chunks",
            batch.scores.len(),
            chunks.len()
        )));
    }
    for (c, s) in chunks.iter_mut().zip(&batch.scores) {
        c.score = *s;
    }

    let mut ranked: Vec<usize> = (0..chunks.len()).collect();
    ranked.sort_by(|&a, &b| chunks[b].score.total_cmp(&chunks[a].score).then(a.cmp(&b)));

    // Per-chunk rounding can push the cost sum past the whole-text count, so a
    // budget covering the whole text keeps everything outright.
    let (mut kept, approximate) = if budget >= context_tokens {
        ((0..chunks.len()).collect::<Vec<_>>(), false)
    } else {
        let items: Vec<KnapsackItem> = ranked
            .iter()
            .map(|&i| KnapsackItem {
                score: chunks[i].score,
                cost: chunks[i].token_cost,
            })
            .collect();
        let sol = knapsack_select(&items, budget, options.dp_cell_cap);
        if sol.approximate {
            log::warn!(
                "knapsack table {}x{} over cap; greedy selection used",
                items.len(),
                budget + 1
            );
        }
        (sol.indices.iter().map(|&r| ranked[r]).collect(), sol.approximate)
    };
    kept.sort_unstable();

    let out = assemble(text, kept.iter().map(|&i| chunks[i].span.clone()));
    let compressed_tokens = tokenizer.count(&out);
    let ratio = ratio_textual(context_tokens.max(1), compressed_tokens.max(1))?;
    Ok(SelectiveCompression {
        output: TextCompression {
            text: out,
            ratio,
            accounting: CompressionAccounting {
                wall_latency_s: started.elapsed().as_secs_f64(),
                llm_tokens_spent: batch.tokens_spent,
            },
        },
        kept: kept.iter().map(|&i| chunks[i].id).collect(),
        chunk_count: chunks.len(),
        approximate,
    })
}
