use codepage::budget::{estimate_visual_tokens, target_ratio_search, EncoderProfile};
use codepage::render::{RenderConfig, Renderer};
use codepage::tokenizer::Tokenizer;
use proptest::prelude::*;

/// Ratio at each valid glyph size, from grid arithmetic alone: every line
/// takes ceil(len / cpl) rows (at least one), pages hold rows * columns.
fn sweep(text: &str, tokens: usize, base: &RenderConfig, p: &EncoderProfile) -> Vec<(u32, f64)> {
    let page = estimate_visual_tokens(base.page_height_px, base.page_width_px, p);
    (8..=40)
        .filter_map(|g| {
            let layout = *Renderer::new(&base.with_glyph_px(g)).ok()?.layout();
            let rows: usize = text
                .lines()
                .map(|l| l.chars().count().div_ceil(layout.chars_per_line).max(1))
                .sum();
            let pages = rows.div_ceil(layout.rows_per_column * base.columns as usize).max(1);
            Some((g, tokens as f64 / (pages as f64 * page)))
        })
        .collect()
}

fn dense_context() -> impl Strategy<Value = String> {
    prop::collection::vec(40usize..200, 200..600).prop_map(|lens| {
        lens.iter()
            .enumerate()
            .map(|(i, &n)| format!("{:width$}\n", format!("s{i}"), width = n).replace(' ', "x"))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn search_agrees_with_a_full_sweep(
        text in dense_context(),
        target in 1.0f64..6.0,
        columns in 1u32..=2,
    ) {
        let tok = Tokenizer::default();
        let tokens = tok.count(&text);
        let p = EncoderProfile::patch16();
        let base = RenderConfig { columns, ..RenderConfig::default() };
        let all = sweep(&text, tokens, &base, &p);
        let s = target_ratio_search(&text, tokens, &base, &p, target, 0.05).unwrap();
        let (_, r) = *all.iter().find(|(g, _)| *g == s.config.glyph_px).unwrap();
        prop_assert!((r - s.achieved_ratio).abs() < 1e-12);
        let hits: Vec<u32> = all.iter().filter(|(_, r)| (r - target).abs() <= 0.05 * target).map(|x| x.0).collect();
        if s.infeasible {
            prop_assert!(hits.is_empty(), "hits {:?}", hits);
            let closest = all.iter().map(|(_, r)| (r - target).abs()).fold(f64::INFINITY, f64::min);
            prop_assert!((r - target).abs() <= closest + 1e-12);
        } else if s.config != base {
            prop_assert_eq!(Some(&s.config.glyph_px), hits.first());
        } else {
            prop_assert!(hits.contains(&base.glyph_px));
        }
        prop_assert!(s.evaluations <= 34);
    }
}

#[test]
fn dense_text_hits_or_brackets_targets() {
    // 190-char lines: ratio falls from 2.351 at 9px to 2.160 at 10px, 1.859 at 11px, 1.738 at 12px
    let tok = Tokenizer::default();
    let text: String = (0..1500).map(|i| format!("{:0>190}\n", i)).collect();
    let tokens = tok.count(&text);
    let p = EncoderProfile::patch16();
    let base = RenderConfig::default();
    let s = target_ratio_search(&text, tokens, &base, &p, 1.7, 0.05).unwrap();
    assert_eq!((s.config.glyph_px, s.infeasible), (12, false));
    let s = target_ratio_search(&text, tokens, &base, &p, 2.2, 0.05).unwrap();
    assert_eq!((s.config.glyph_px, s.infeasible), (10, false));
    // 2.0 sits between 10px and 11px, and 11px is closer
    let s = target_ratio_search(&text, tokens, &base, &p, 2.0, 0.05).unwrap();
    assert_eq!((s.config.glyph_px, s.infeasible), (11, true));
}

#[test]
fn unreachable_target_is_flagged() {
    let tok = Tokenizer::default();
    let text = "x = 1\n".repeat(200);
    let s = target_ratio_search(&text, tok.count(&text), &RenderConfig::default(), &EncoderProfile::patch16(), 1000.0, 0.05)
        .unwrap();
    assert!(s.infeasible);
    assert_eq!(s.config.glyph_px, 8);
}
