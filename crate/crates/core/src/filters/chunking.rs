use crate::context::BoundaryDetector;
use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

use super::Chunk;

/// Fixed-size token windows. Chunk `k` covers tokens
/// `[k·stride, min(k·stride + window, n))`; windows stop once one reaches the
/// end of the text.
pub fn sliding_window_chunks(
    text: &str,
    window_tokens: usize,
    stride_tokens: usize,
    tokenizer: &Tokenizer,
) -> Result<Vec<Chunk>> {
    if stride_tokens == 0 || stride_tokens > window_tokens {
        return Err(Error::Filter(format!(
            "need 1 <= stride <= window, got stride {stride_tokens}, window {window_tokens}"
        )));
    }
    let spans = tokenizer.spans(text);
    let n = spans.len();
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + window_tokens).min(n);
        let byte_span = spans[start].start..spans[end - 1].end;
        chunks.push(Chunk {
            id: chunks.len(),
            text: text[byte_span.clone()].to_owned(),
            span: byte_span,
            token_cost: end - start,
            score: 0.0,
        });
        if end == n {
            break;
        }
        start += stride_tokens;
    }
    Ok(chunks)
}

/// One chunk per top-level definition; code between definitions becomes its
/// own chunk. The chunks tile the source.
pub fn function_chunks(text: &str, detector: &dyn BoundaryDetector, tokenizer: &Tokenizer) -> Vec<Chunk> {
    let mut spans = Vec::new();
    let mut pos = 0;
    for def in detector.definitions(text) {
        if def.start > pos {
            spans.push(pos..def.start);
        }
        spans.push(def.span());
        pos = def.end;
    }
    if pos < text.len() {
        spans.push(pos..text.len());
    }
    spans
        .into_iter()
        .enumerate()
        .map(|(id, span)| {
            let chunk_text = text[span.clone()].to_owned();
            Chunk {
                id,
                token_cost: tokenizer.count(&chunk_text),
                text: chunk_text,
                span,
                score: 0.0,
            }
        })
        .collect()
}
