use std::io::Write;

use codepage::tokenizer::{Tokenizer, TokenizerProfile};
use proptest::prelude::*;

/// Greedy longest match by scanning every entry at every position.
fn oracle_count(entries: &[String], text: &str) -> usize {
    let mut pos = 0;
    let mut n = 0;
    while pos < text.len() {
        let rest = &text[pos..];
        let best = entries
            .iter()
            .filter(|e| !e.is_empty() && rest.starts_with(e.as_str()))
            .map(String::len)
            .max()
            .unwrap_or_else(|| rest.chars().next().unwrap().len_utf8());
        pos += best;
        n += 1;
    }
    n
}

fn oracle_bytes(len: usize) -> usize {
    // round half up of len / 3.5 in integers: floor((4 len + 7) / 14)
    (4 * len + 7) / 14
}

#[test]
fn byte_estimator_examples() {
    let tok = Tokenizer::byte_estimator(3.5).unwrap();
    assert_eq!(tok.count(""), 0);
    assert_eq!(tok.count("abc"), 1);
    assert_eq!(tok.count("abcdefg"), 2);
    assert_eq!(tok.count(&"x".repeat(3500)), 1000);
    assert!(Tokenizer::byte_estimator(0.0).is_err());
}

#[test]
fn vocab_file_round_trip() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "# comment\ndef\n\\s\\s\\s\\s\nreturn\nre").unwrap();
    let profile = TokenizerProfile::SubwordVocab {
        vocab_source: f.path().to_owned(),
    };
    let tok = Tokenizer::from_profile(&profile).unwrap();
    // "    " | "return" | " " | "x"
    assert_eq!(tok.count("    return x"), 4);
    assert_eq!(tok.profile(), &profile);
}

proptest! {
    #[test]
    fn byte_estimator_matches_integer_oracle(len in 0usize..100_000) {
        let tok = Tokenizer::byte_estimator(3.5).unwrap();
        prop_assert_eq!(tok.count(&"a".repeat(len)), oracle_bytes(len));
        prop_assert_eq!(tok.count_for_len(len), Some(oracle_bytes(len)));
    }

    #[test]
    fn vocab_matches_brute_force(
        entries in prop::collection::vec("[a-d é]{1,4}", 1..12),
        text in "[a-e é\n]{0,60}",
    ) {
        let tok = Tokenizer::from_entries(&entries).unwrap();
        prop_assert_eq!(tok.count(&text), oracle_count(&entries, &text));
        let spans = tok.spans(&text);
        prop_assert_eq!(spans.len(), tok.count(&text));
        let joined: String = spans.iter().map(|s| &text[s.clone()]).collect();
        prop_assert_eq!(joined, text);
    }

    #[test]
    fn spans_tile_for_byte_estimator(text in "\\PC{0,80}") {
        let tok = Tokenizer::byte_estimator(3.5).unwrap();
        let spans = tok.spans(&text);
        prop_assert_eq!(spans.len(), tok.count(&text).max(usize::from(!text.is_empty())));
        let mut at = 0;
        for s in &spans {
            prop_assert_eq!(s.start, at);
            at = s.end;
        }
        prop_assert_eq!(at, text.len());
    }

    #[test]
    fn counts_are_additive_up_to_rounding(a in "[ -~]{0,200}", b in "[ -~]{0,200}") {
        let tok = Tokenizer::byte_estimator(3.5).unwrap();
        let whole = tok.count(&format!("{a}{b}")) as i64;
        let parts = (tok.count(&a) + tok.count(&b)) as i64;
        prop_assert!((whole - parts).abs() <= 1);
    }
}
