use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::budget::ratio_textual;
use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

use super::{assemble, Chunk, ChunkScorer, CompressionAccounting, TextCompression};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagSelection {
    pub text: String,
    /// Kept chunk ids in source order.
    pub kept: Vec<usize>,
    /// Score per input chunk.
    pub scores: Vec<f64>,
    pub tokens_spent: u64,
}

/// Indices into `scores`, best first; ties go to the lower chunk id.
fn ranking(chunks: &[Chunk], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(chunks[a].id.cmp(&chunks[b].id))
    });
    order
}

fn emit(source: &str, chunks: &[Chunk], order: &[usize], k: usize) -> (String, Vec<usize>) {
    let mut picked: Vec<&Chunk> = order[..k.min(order.len())].iter().map(|&i| &chunks[i]).collect();
    picked.sort_by_key(|c| (c.span.start, c.id));
    let text = assemble(source, picked.iter().map(|c| c.span.clone()));
    (text, picked.iter().map(|c| c.id).collect())
}

fn score_all(instruction: &str, chunks: &[Chunk], scorer: &dyn ChunkScorer) -> Result<(Vec<f64>, u64)> {
    let batch = scorer.score(instruction, chunks)?;
    if batch.scores.len() != chunks.len() {
        return Err(Error::Scorer(format!(
            "scorer returned {} scores for {} chunks",
            batch.scores.len(),
            chunks.len()
        )));
    }
    Ok((batch.scores, batch.tokens_spent))
}

/// Keeps the `k` best-scoring chunks and emits them in source order.
pub fn rag_select(
    source: &str,
    chunks: &[Chunk],
    instruction: &str,
    k: usize,
    scorer: &dyn ChunkScorer,
) -> Result<RagSelection> {
    if k == 0 {
        return Err(Error::Filter("k must be at least 1".into()));
    }
    if chunks.is_empty() {
        return Err(Error::Filter("no chunks to select from".into()));
    }
    let (scores, tokens_spent) = score_all(instruction, chunks, scorer)?;
    let order = ranking(chunks, &scores);
    let (text, kept) = emit(source, chunks, &order, k);
    Ok(RagSelection {
        text,
        kept,
        scores,
        tokens_spent,
    })
}

/// Chooses the largest `k` whose output fits `context_tokens / target_ratio`
/// (at least one chunk is always kept) and returns that selection.
pub fn rag_compress_to_budget(
    source: &str,
    chunks: &[Chunk],
    instruction: &str,
    target_ratio: f64,
    scorer: &dyn ChunkScorer,
    tokenizer: &Tokenizer,
) -> Result<TextCompression> {
    let started = Instant::now();
    if target_ratio.is_nan() || target_ratio < 1.0 {
        return Err(Error::Filter(format!("target ratio must be >= 1, got {target_ratio}")));
    }
    if chunks.is_empty() {
        return Err(Error::Filter("no chunks to select from".into()));
    }
    let context_tokens = tokenizer.count(source);
    let budget = context_tokens as f64 / target_ratio;
    let (scores, tokens_spent) = score_all(instruction, chunks, scorer)?;
    let order = ranking(chunks, &scores);

    let fits = |k: usize| tokenizer.count(&emit(source, chunks, &order, k).0) as f64 <= budget;
    let (mut lo, mut hi) = (1, chunks.len());
    if fits(hi) {
        lo = hi;
    } else {
        // invariant: answer in [lo, hi); lo is kept even when it overflows
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if fits(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let (text, _) = emit(source, chunks, &order, lo);
    let ratio = ratio_textual(context_tokens.max(1), tokenizer.count(&text).max(1))?;
    Ok(TextCompression {
        text,
        ratio,
        accounting: CompressionAccounting {
            wall_latency_s: started.elapsed().as_secs_f64(),
            llm_tokens_spent: tokens_spent,
        },
    })
}
