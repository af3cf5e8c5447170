//! Textual compression baselines.

mod chunking;
mod knapsack;
mod random_line;
mod rag;
mod scorer;
mod selective;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::budget::RatioReport;

pub use chunking::{function_chunks, sliding_window_chunks};
pub use knapsack::{knapsack_select, KnapsackItem, KnapsackSolution, DEFAULT_DP_CELL_CAP};
pub use random_line::random_line_compress;
pub use rag::{rag_compress_to_budget, rag_select, RagSelection};
pub(crate) use scorer::RELEVANCE_TEMPLATE;
pub use scorer::{
    subword_terms, ChunkScorer, LexicalScorer, OracleScorer, RemoteLogprobScorer, ScoreBatch,
    ScorerSpec,
};
pub use selective::{selective_filter_compress, SelectiveCompression, SelectiveOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: usize,
    /// Byte range in the source.
    pub span: Range<usize>,
    pub text: String,
    pub token_cost: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompressionAccounting {
    pub wall_latency_s: f64,
    pub llm_tokens_spent: u64,
}

impl CompressionAccounting {
    pub fn add(&mut self, other: &CompressionAccounting) {
        self.wall_latency_s += other.wall_latency_s;
        self.llm_tokens_spent += other.llm_tokens_spent;
    }
}

/// Result of a textual compressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextCompression {
    pub text: String,
    pub ratio: RatioReport,
    pub accounting: CompressionAccounting,
}

pub(crate) const SEPARATOR: &str = "\n\n";

/// Emits the source text covered by `spans` in source order. Overlapping or
/// touching spans are merged; disjoint groups are joined so that exactly one
/// blank line separates them.
pub(crate) fn assemble(source: &str, spans: impl IntoIterator<Item = Range<usize>>) -> String {
    let mut spans: Vec<Range<usize>> = spans.into_iter().filter(|s| s.start < s.end).collect();
    spans.sort_by_key(|s| (s.start, s.end));
    let mut merged: Vec<Range<usize>> = Vec::with_capacity(spans.len());
    for s in spans {
        match merged.last_mut() {
            Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
            _ => merged.push(s),
        }
    }
    let mut out = String::new();
    let n = merged.len();
    for (i, span) in merged.into_iter().enumerate() {
        let piece = &source[span];
        if i + 1 == n {
            out.push_str(piece);
        } else {
            out.push_str(piece.trim_end_matches('\n'));
            out.push_str(SEPARATOR);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assemble_merges_and_separates() {
        let src = "aaaa\nbbbb\ncccc\ndddd\n";
        assert_eq!(assemble(src, [0..5, 5..10]), "aaaa\nbbbb\n");
        assert_eq!(assemble(src, [0..5, 10..15]), "aaaa\n\ncccc\n");
        assert_eq!(assemble(src, [15..20, 0..7, 3..10]), "aaaa\nbbbb\n\ndddd\n");
        assert_eq!(assemble(src, std::iter::once(0..src.len())), src);
        assert_eq!(assemble(src, std::iter::empty()), "");
    }
}
