//! Visual-token estimates, compression ratios, and glyph-size search for a
//! target ratio.
//!
//! Token estimates use the rendered page dimensions as-is; no model-side
//! resize is simulated. Per-page estimates are kept as exact reals in all
//! ratio math.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{layout_line_lengths, RenderConfig, RenderedContext, Renderer};

/// Vision encoder geometry: one visual token per `patch_px² × pooling_factor`
/// pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncoderProfile {
    pub patch_px: u32,
    #[serde(default = "default_pooling")]
    pub pooling_factor: u32,
}

fn default_pooling() -> u32 {
    4
}

impl Default for EncoderProfile {
    fn default() -> Self {
        Self::patch16()
    }
}

impl EncoderProfile {
    /// 16 px patches, 2×2 pooling.
    pub fn patch16() -> Self {
        Self {
            patch_px: 16,
            pooling_factor: 4,
        }
    }

    /// 14 px patches, 2×2 pooling.
    pub fn patch14() -> Self {
        Self {
            patch_px: 14,
            pooling_factor: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.patch_px, 14 | 16) {
            return Err(Error::EncoderProfile(format!(
                "patch_px must be 14 or 16, got {}",
                self.patch_px
            )));
        }
        if self.pooling_factor == 0 {
            return Err(Error::EncoderProfile("pooling_factor must be positive".into()));
        }
        Ok(())
    }

    pub fn pixels_per_token(&self) -> u64 {
        self.patch_px as u64 * self.patch_px as u64 * self.pooling_factor as u64
    }
}

/// `H · W / (patch² · pooling)`
pub fn estimate_visual_tokens(height: u32, width: u32, profile: &EncoderProfile) -> f64 {
    (height as f64 * width as f64) / profile.pixels_per_token() as f64
}

/// Display value for a page's estimate.
pub fn display_tokens(tau: f64) -> u64 {
    tau.ceil() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMethod {
    Visual,
    Textual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub method: RatioMethod,
    pub context_tokens: usize,
    /// Visual tokens (real) or compressed text tokens.
    pub payload: f64,
    pub ratio: f64,
    /// Visual only: per-page token estimates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_page: Vec<f64>,
}

pub fn ratio_visual(
    context_tokens: usize,
    rendered: &RenderedContext,
    profile: &EncoderProfile,
) -> Result<RatioReport> {
    profile.validate()?;
    if rendered.pages.is_empty() {
        return Err(Error::Ratio("rendered context has no pages".into()));
    }
    if context_tokens == 0 {
        return Err(Error::Ratio("context has no tokens".into()));
    }
    let per_page: Vec<f64> = rendered
        .pages
        .iter()
        .map(|p| estimate_visual_tokens(p.height, p.width, profile))
        .collect();
    let payload: f64 = per_page.iter().sum();
    Ok(RatioReport {
        method: RatioMethod::Visual,
        context_tokens,
        payload,
        ratio: context_tokens as f64 / payload,
        per_page,
    })
}

pub fn ratio_textual(context_tokens: usize, compressed_tokens: usize) -> Result<RatioReport> {
    if compressed_tokens == 0 {
        return Err(Error::Ratio("compressed context has no tokens".into()));
    }
    if context_tokens == 0 {
        return Err(Error::Ratio("context has no tokens".into()));
    }
    Ok(RatioReport {
        method: RatioMethod::Textual,
        context_tokens,
        payload: compressed_tokens as f64,
        ratio: context_tokens as f64 / compressed_tokens as f64,
        per_page: Vec::new(),
    })
}

pub const SEARCH_MIN_GLYPH_PX: u32 = 8;
pub const SEARCH_MAX_GLYPH_PX: u32 = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSearch {
    pub config: RenderConfig,
    pub achieved_ratio: f64,
    pub pages: usize,
    /// No glyph size in range reached the target within tolerance; `config`
    /// is the closest one.
    pub infeasible: bool,
    /// Number of layout evaluations performed.
    pub evaluations: usize,
}

/// Searches `glyph_px` in `[8, 40]` for a config whose visual ratio lies within
/// `±tol·target` of `target`. The base config is returned unchanged when it
/// already qualifies; otherwise the smallest qualifying glyph size is chosen.
/// Ratio is non-increasing in glyph size, so a bisection suffices.
pub fn target_ratio_search(
    context: &str,
    context_tokens: usize,
    base: &RenderConfig,
    profile: &EncoderProfile,
    target: f64,
    tol: f64,
) -> Result<RatioSearch> {
    profile.validate()?;
    if target.is_nan() || target < 1.0 {
        return Err(Error::Ratio(format!("target ratio must be >= 1, got {target}")));
    }
    if !(tol > 0.0 && tol <= 0.5) {
        return Err(Error::Ratio(format!("tolerance must be in (0, 0.5], got {tol}")));
    }
    if context_tokens == 0 {
        return Err(Error::Ratio("context has no tokens".into()));
    }
    let page_tokens = estimate_visual_tokens(base.page_height_px, base.page_width_px, profile);
    let lo_ok = target * (1.0 - tol);
    let hi_ok = target * (1.0 + tol);
    let line_lengths = layout_line_lengths(context, base.tab_width as usize);
    if line_lengths.is_empty() {
        return Err(Error::EmptyContext);
    }

    let mut probe = Probe {
        base,
        line_lengths: &line_lengths,
        context_tokens,
        page_tokens,
        cache: vec![None; (SEARCH_MAX_GLYPH_PX + 1) as usize],
        evaluations: 0,
    };

    let base_eval = if (SEARCH_MIN_GLYPH_PX..=SEARCH_MAX_GLYPH_PX).contains(&base.glyph_px) {
        probe.eval(base.glyph_px)?
    } else {
        probe.eval_config(base)?
    };
    if let Some((pages, ratio)) = base_eval {
        if ratio >= lo_ok && ratio <= hi_ok {
            return Ok(RatioSearch {
                config: base.clone(),
                achieved_ratio: ratio,
                pages,
                infeasible: false,
                evaluations: probe.evaluations,
            });
        }
    }

    // Valid glyph sizes form a prefix of the range: larger sizes only shrink
    // the grid.
    let mut max_valid = None;
    for g in (SEARCH_MIN_GLYPH_PX..=SEARCH_MAX_GLYPH_PX).rev() {
        if probe.eval(g)?.is_some() {
            max_valid = Some(g);
            break;
        }
    }
    let Some(max_valid) = max_valid else {
        return Err(Error::RenderConfig(
            "no glyph size in [8, 40] yields a valid layout for this page geometry".into(),
        ));
    };

    // Smallest g with ratio(g) <= hi_ok.
    let (mut lo, mut hi) = (SEARCH_MIN_GLYPH_PX, max_valid + 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let (_, r) = probe.valid(mid)?;
        if r <= hi_ok {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }

    let (glyph, infeasible) = if lo > max_valid {
        // Even the largest glyph overshoots the target.
        (max_valid, true)
    } else if probe.valid(lo)?.1 >= lo_ok {
        (lo, false)
    } else if lo > SEARCH_MIN_GLYPH_PX {
        // The step from lo - 1 to lo jumps over the tolerance band.
        let below = probe.valid(lo - 1)?.1;
        let at = probe.valid(lo)?.1;
        if (below - target).abs() < (at - target).abs() {
            (lo - 1, true)
        } else {
            (lo, true)
        }
    } else {
        (lo, true)
    };
    let (pages, ratio) = probe.valid(glyph)?;
    Ok(RatioSearch {
        config: base.with_glyph_px(glyph),
        achieved_ratio: ratio,
        pages,
        infeasible,
        evaluations: probe.evaluations,
    })
}

struct Probe<'a> {
    base: &'a RenderConfig,
    line_lengths: &'a [usize],
    context_tokens: usize,
    page_tokens: f64,
    cache: Vec<Option<Option<(usize, f64)>>>,
    evaluations: usize,
}

impl Probe<'_> {
    /// Page count and ratio, or `None` if the config violates a layout
    /// invariant.
    fn eval_config(&mut self, cfg: &RenderConfig) -> Result<Option<(usize, f64)>> {
        self.evaluations += 1;
        match Renderer::new(cfg) {
            Ok(r) => {
                let pages = r.page_count_for_lines(self.line_lengths);
                let ratio = self.context_tokens as f64 / (pages as f64 * self.page_tokens);
                Ok(Some((pages, ratio)))
            }
            Err(Error::RenderConfig(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn eval(&mut self, glyph_px: u32) -> Result<Option<(usize, f64)>> {
        if let Some(hit) = self.cache[glyph_px as usize] {
            return Ok(hit);
        }
        let result = self.eval_config(&self.base.with_glyph_px(glyph_px))?;
        self.cache[glyph_px as usize] = Some(result);
        Ok(result)
    }

    fn valid(&mut self, glyph_px: u32) -> Result<(usize, f64)> {
        self.eval(glyph_px)?.ok_or_else(|| {
            Error::RenderConfig(format!("glyph_px {glyph_px} has no valid layout"))
        })
    }
}
