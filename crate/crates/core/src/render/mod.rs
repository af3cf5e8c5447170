//! Deterministic rendering of code text into grayscale page images.
//!
//! Layout is a fixed character grid. The cell width is the widest advance of
//! printable ASCII at the configured size, so proportional fonts are laid out
//! monospaced. Rows are `ceil(1.2 * glyph_px)` pixels tall.
//!
//! Rasterization mode: outlines are rasterized once per character by
//! `ab_glyph` at an integer pen position, coverage is quantized to 8 bits, and
//! each pixel is `(bg * (255 - c) + fg * c + 127) / 255`. Where glyph boxes
//! overlap the value farther from the background wins, so paint order does not
//! matter. Pages are encoded as 8-bit grayscale PNG with the `Up` row filter
//! and the fdeflate "ultra fast" deflate mode; no ancillary chunks are
//! written.

mod font;
mod layout;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::{estimate_visual_tokens, EncoderProfile};
use crate::error::{Error, Result};

pub use font::{
    font_metrics, line_height, load_font, sha256_hex, FontId, FontMetrics, LoadedFont,
    DEJAVU_SANS_SHA256, JETBRAINS_MONO_SHA256,
};
pub use layout::{paginate, wrap_lines, PagePlan, Pagination, Segment, SegmentRef};
pub(crate) use layout::expanded_line_lengths as layout_line_lengths;

use font::GlyphAtlas;

pub const MIN_CHARS_PER_LINE: usize = 20;
pub const MIN_ROWS_PER_COLUMN: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub font: FontId,
    pub glyph_px: u32,
    pub page_width_px: u32,
    pub page_height_px: u32,
    pub margin_px: u32,
    pub columns: u32,
    pub gutter_px: u32,
    pub tab_width: u32,
    pub foreground: u8,
    pub background: u8,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            font: FontId::JetBrainsMonoRegular,
            glyph_px: 12,
            page_width_px: 1024,
            page_height_px: 1024,
            margin_px: 16,
            columns: 1,
            gutter_px: 24,
            tab_width: 4,
            foreground: 0,
            background: 255,
        }
    }
}

/// Grid geometry derived from a [`RenderConfig`] and its font.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub font: FontMetrics,
    pub column_width_px: u32,
    pub chars_per_line: usize,
    pub rows_per_column: usize,
}

impl RenderConfig {
    pub fn with_glyph_px(&self, glyph_px: u32) -> Self {
        Self {
            glyph_px,
            ..self.clone()
        }
    }

    fn usable_width(&self) -> Result<u32> {
        if !(1..=2).contains(&self.columns) {
            return Err(Error::RenderConfig(format!(
                "columns must be 1 or 2, got {}",
                self.columns
            )));
        }
        if self.glyph_px == 0 || self.tab_width == 0 {
            return Err(Error::RenderConfig(
                "glyph_px and tab_width must be positive".into(),
            ));
        }
        let reserved = 2 * self.margin_px as u64 + (self.columns as u64 - 1) * self.gutter_px as u64;
        match (self.page_width_px as u64).checked_sub(reserved) {
            Some(w) if w > 0 => Ok(w as u32),
            _ => Err(Error::RenderConfig(format!(
                "no usable width: page {} px, margins and gutters {} px",
                self.page_width_px, reserved
            ))),
        }
    }

    /// Computes the grid and checks the config invariants.
    pub fn layout(&self, font: &LoadedFont) -> Result<Layout> {
        let usable = self.usable_width()?;
        let metrics = font_metrics(font, self.glyph_px);
        let column_width_px = usable / self.columns;
        let chars_per_line = (column_width_px / metrics.advance_px) as usize;
        if chars_per_line < MIN_CHARS_PER_LINE {
            return Err(Error::RenderConfig(format!(
                "{chars_per_line} characters per line at glyph_px {}; need at least {MIN_CHARS_PER_LINE}",
                self.glyph_px
            )));
        }
        let usable_height = (self.page_height_px as u64).saturating_sub(2 * self.margin_px as u64);
        let rows_per_column = (usable_height / metrics.line_height_px as u64) as usize;
        if rows_per_column < MIN_ROWS_PER_COLUMN {
            return Err(Error::RenderConfig(format!(
                "{rows_per_column} rows per column at glyph_px {}; need at least {MIN_ROWS_PER_COLUMN}",
                self.glyph_px
            )));
        }
        Ok(Layout {
            font: metrics,
            column_width_px,
            chars_per_line,
            rows_per_column,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageImage {
    pub index: usize,
    pub width: u32,
    pub height: u32,
    /// Encoded PNG bytes.
    #[serde(skip)]
    pub png: Arc<Vec<u8>>,
}

impl PageImage {
    pub fn file_name(&self) -> String {
        page_file_name(self.index)
    }

    pub fn sha256(&self) -> String {
        sha256_hex(&self.png)
    }

    /// Decodes the page back to 8-bit gray pixels, row-major.
    pub fn decode(&self) -> Result<Vec<u8>> {
        let decoder = png::Decoder::new(std::io::Cursor::new(self.png.as_slice()));
        let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::Png(e.to_string()))?;
        buf.truncate(info.buffer_size());
        Ok(buf)
    }
}

pub fn page_file_name(index: usize) -> String {
    format!("page_{index:04}.png")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionReport {
    /// Occurrences drawn with the replacement glyph.
    pub count: usize,
    pub chars: BTreeSet<char>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderedContext {
    pub pages: Vec<PageImage>,
    /// Per page, the segments painted on it in paint order.
    pub layout_map: Vec<Vec<SegmentRef>>,
    /// Estimated visual tokens per page.
    pub visual_tokens: Vec<f64>,
    pub encoder: EncoderProfile,
    pub substitutions: SubstitutionReport,
    pub segment_count: usize,
    pub chars_per_line: usize,
    pub rows_per_column: usize,
    pub config: RenderConfig,
    pub font_sha256: String,
}

impl RenderedContext {
    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn dims(&self) -> Vec<(u32, u32)> {
        self.pages.iter().map(|p| (p.height, p.width)).collect()
    }

    pub fn total_visual_tokens(&self) -> f64 {
        self.visual_tokens.iter().sum()
    }

    pub fn write_pages(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.pages
            .iter()
            .map(|p| {
                let path = dir.join(p.file_name());
                std::fs::write(&path, p.png.as_slice()).map_err(|e| Error::io(&path, e))?;
                Ok(path)
            })
            .collect()
    }
}

/// A font loaded for one render configuration.
#[derive(Debug, Clone)]
pub struct Renderer {
    config: RenderConfig,
    font: LoadedFont,
    layout: Layout,
}

impl Renderer {
    pub fn new(config: &RenderConfig) -> Result<Self> {
        let font = load_font(&config.font)?;
        let layout = config.layout(&font)?;
        Ok(Self {
            config: config.clone(),
            font,
            layout,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn config(&self) -> &RenderConfig {
        &self.config
    }

    pub fn wrap(&self, text: &str) -> Vec<Segment> {
        wrap_lines(text, self.layout.chars_per_line, self.config.tab_width as usize)
    }

    /// Number of pages `render` would produce, without rasterizing.
    pub fn page_count(&self, text: &str) -> usize {
        let lens = layout::expanded_line_lengths(text, self.config.tab_width as usize);
        self.page_count_for_lines(&lens)
    }

    pub(crate) fn page_count_for_lines(&self, expanded_lengths: &[usize]) -> usize {
        let segments = layout::segment_count(expanded_lengths, self.layout.chars_per_line);
        layout::page_count(
            segments,
            self.layout.rows_per_column,
            self.config.columns as usize,
        )
    }

    pub fn render(&self, context: &str, encoder: &EncoderProfile) -> Result<RenderedContext> {
        encoder.validate()?;
        let segments = self.wrap(context);
        let plan = paginate(
            segments.len(),
            self.layout.rows_per_column,
            self.config.columns as usize,
        );
        if plan.empty {
            return Err(Error::EmptyContext);
        }
        let mut chars: Vec<char> = segments.iter().flat_map(|s| s.text.chars()).collect();
        chars.sort_unstable();
        chars.dedup();
        let atlas = GlyphAtlas::build(
            &self.font,
            self.config.glyph_px,
            &self.layout.font,
            chars.iter().copied(),
        );
        let substitutions = {
            let mut report = SubstitutionReport::default();
            for c in segments.iter().flat_map(|s| s.text.chars()) {
                if atlas.is_missing(c) {
                    report.count += 1;
                    report.chars.insert(c);
                }
            }
            report
        };

        let pages: Vec<PageImage> = plan
            .pages
            .par_iter()
            .enumerate()
            .map(|(index, page)| {
                let pixels = self.paint(page, &segments, &atlas);
                let png = encode_png(&pixels, self.config.page_width_px, self.config.page_height_px)?;
                Ok(PageImage {
                    index,
                    width: self.config.page_width_px,
                    height: self.config.page_height_px,
                    png: Arc::new(png),
                })
            })
            .collect::<Result<_>>()?;

        let layout_map = plan
            .pages
            .iter()
            .map(|p| p.segments().map(|i| segments[i].key()).collect())
            .collect();
        let visual_tokens = pages
            .iter()
            .map(|p| estimate_visual_tokens(p.height, p.width, encoder))
            .collect();
        Ok(RenderedContext {
            pages,
            layout_map,
            visual_tokens,
            encoder: *encoder,
            substitutions,
            segment_count: segments.len(),
            chars_per_line: self.layout.chars_per_line,
            rows_per_column: self.layout.rows_per_column,
            config: self.config.clone(),
            font_sha256: self.font.sha256.clone(),
        })
    }

    fn paint(&self, page: &PagePlan, segments: &[Segment], atlas: &GlyphAtlas) -> Vec<u8> {
        let cfg = &self.config;
        let (w, h) = (cfg.page_width_px as i64, cfg.page_height_px as i64);
        let (fg, bg) = (cfg.foreground as u32, cfg.background as u32);
        let mut pixels = vec![cfg.background; (w * h) as usize];
        let advance = self.layout.font.advance_px as i64;
        let line_h = self.layout.font.line_height_px as i64;
        for (col, range) in page.columns.iter().enumerate() {
            let x0 = cfg.margin_px as i64
                + col as i64 * (self.layout.column_width_px as i64 + cfg.gutter_px as i64);
            for (row, seg_idx) in range.clone().enumerate() {
                let baseline =
                    cfg.margin_px as i64 + row as i64 * line_h + self.layout.font.baseline_px as i64;
                for (k, c) in segments[seg_idx].text.chars().enumerate() {
                    let Some(g) = atlas.get(c) else { continue };
                    let gx = x0 + k as i64 * advance + g.left as i64;
                    let gy = baseline + g.top as i64;
                    for y in 0..g.height as i64 {
                        let py = gy + y;
                        if py < 0 || py >= h {
                            continue;
                        }
                        let row_cov = &g.coverage[(y as usize) * g.width as usize..][..g.width as usize];
                        for (x, &cov) in row_cov.iter().enumerate() {
                            let px = gx + x as i64;
                            if cov == 0 || px < 0 || px >= w {
                                continue;
                            }
                            let cov = cov as u32;
                            let v = ((bg * (255 - cov) + fg * cov + 127) / 255) as u8;
                            let slot = &mut pixels[(py * w + px) as usize];
                            if v.abs_diff(cfg.background) > slot.abs_diff(cfg.background) {
                                *slot = v;
                            }
                        }
                    }
                }
            }
        }
        pixels
    }
}

/// Renders `context` with `config`, estimating visual tokens per page under
/// `encoder`.
pub fn render(context: &str, config: &RenderConfig, encoder: &EncoderProfile) -> Result<RenderedContext> {
    Renderer::new(config)?.render(context, encoder)
}

fn encode_png(pixels: &[u8], width: u32, height: u32) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(pixels.len() / 8);
    let mut encoder = png::Encoder::new(&mut out, width, height);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_deflate_compression(png::DeflateCompression::FdeflateUltraFast);
    encoder.set_filter(png::Filter::Up);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Png(e.to_string()))?;
    writer
        .write_image_data(pixels)
        .map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    Ok(out)
}
