use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use ab_glyph::{point, Font, FontArc, GlyphId, PxScale, ScaleFont};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

static JETBRAINS_MONO: &[u8] = include_bytes!("../../assets/fonts/JetBrainsMono-Regular.ttf");
static DEJAVU_SANS: &[u8] = include_bytes!("../../assets/fonts/DejaVuSans.ttf");

pub const JETBRAINS_MONO_SHA256: &str =
    "d4f32ee39fc28cee165197e9c6dcf798864c3e0d065ae982705ad90ee3ae8a44";
pub const DEJAVU_SANS_SHA256: &str =
    "690243adfefe0ce154b547db6205794bd30ac4277275179517a90994f4980648";

/// `Verdana` renders with the bundled DejaVu Sans; use `Custom` to point at a
/// licensed Verdana file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FontId {
    Verdana,
    JetBrainsMonoRegular,
    Custom(PathBuf),
}

impl std::fmt::Display for FontId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FontId::Verdana => f.write_str("verdana"),
            FontId::JetBrainsMonoRegular => f.write_str("jetbrains_mono_regular"),
            FontId::Custom(p) => write!(f, "custom:{}", p.display()),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone)]
pub struct LoadedFont {
    pub font: FontArc,
    pub sha256: String,
}

impl std::fmt::Debug for LoadedFont {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadedFont").field("sha256", &self.sha256).finish()
    }
}

fn bundled(data: &'static [u8], pinned: &str, name: &str) -> Result<LoadedFont> {
    let sha256 = sha256_hex(data);
    if sha256 != pinned {
        return Err(Error::Font {
            font: name.into(),
            reason: format!("bundled font hash {sha256} does not match pinned {pinned}"),
        });
    }
    let font = FontArc::try_from_slice(data).map_err(|e| Error::Font {
        font: name.into(),
        reason: e.to_string(),
    })?;
    Ok(LoadedFont { font, sha256 })
}

pub fn load_font(id: &FontId) -> Result<LoadedFont> {
    static MONO: OnceLock<std::result::Result<LoadedFont, String>> = OnceLock::new();
    static SANS: OnceLock<std::result::Result<LoadedFont, String>> = OnceLock::new();
    let cached = |cell: &OnceLock<std::result::Result<LoadedFont, String>>, data, pin, name: &str| {
        cell.get_or_init(|| bundled(data, pin, name).map_err(|e| e.to_string()))
            .clone()
            .map_err(|reason| Error::Font {
                font: name.into(),
                reason,
            })
    };
    match id {
        FontId::JetBrainsMonoRegular => cached(&MONO, JETBRAINS_MONO, JETBRAINS_MONO_SHA256, "jetbrains_mono_regular"),
        FontId::Verdana => cached(&SANS, DEJAVU_SANS, DEJAVU_SANS_SHA256, "verdana"),
        FontId::Custom(path) => {
            let data = std::fs::read(path).map_err(|e| Error::Font {
                font: path.display().to_string(),
                reason: e.to_string(),
            })?;
            let sha256 = sha256_hex(&data);
            let font = FontArc::try_from_vec(data).map_err(|e| Error::Font {
                font: path.display().to_string(),
                reason: e.to_string(),
            })?;
            Ok(LoadedFont { font, sha256 })
        }
    }
}

/// Pixel metrics of a font at a given glyph size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FontMetrics {
    /// Grid cell width: the widest advance among printable ASCII, rounded up.
    pub advance_px: u32,
    /// `ceil(1.2 * glyph_px)`
    pub line_height_px: u32,
    /// Offset from the top of a row to the baseline.
    pub baseline_px: i32,
}

pub(crate) fn px_scale(font: &FontArc, glyph_px: u32) -> PxScale {
    let upem = font.units_per_em().unwrap_or(1000.0);
    PxScale::from(glyph_px as f32 * font.height_unscaled() / upem)
}

pub fn line_height(glyph_px: u32) -> u32 {
    (glyph_px * 12).div_ceil(10)
}

pub fn font_metrics(font: &LoadedFont, glyph_px: u32) -> FontMetrics {
    let scaled = font.font.as_scaled(px_scale(&font.font, glyph_px));
    let max_advance = (0x20u8..=0x7e)
        .map(|b| scaled.h_advance(scaled.glyph_id(b as char)))
        .fold(0.0f32, f32::max);
    let advance_px = (max_advance.ceil() as u32).max(1);
    let line_height_px = line_height(glyph_px);
    let ascent = scaled.ascent();
    let font_height = ascent - scaled.descent();
    let baseline_px = ((line_height_px as f32 - font_height) / 2.0 + ascent).round() as i32;
    FontMetrics {
        advance_px,
        line_height_px,
        baseline_px,
    }
}

/// Coverage bitmap of one glyph, positioned relative to the pen origin on the
/// baseline.
#[derive(Debug, Clone)]
pub(crate) struct GlyphBitmap {
    pub left: i32,
    pub top: i32,
    pub width: u32,
    pub height: u32,
    pub coverage: Vec<u8>,
}

fn rasterize(font: &FontArc, scale: PxScale, id: GlyphId) -> Option<GlyphBitmap> {
    let glyph = id.with_scale_and_position(scale, point(0.0, 0.0));
    let outlined = font.outline_glyph(glyph)?;
    let bounds = outlined.px_bounds();
    let width = bounds.width() as u32;
    let height = bounds.height() as u32;
    if width == 0 || height == 0 {
        return None;
    }
    let mut coverage = vec![0u8; (width * height) as usize];
    outlined.draw(|x, y, c| {
        let v = (c.clamp(0.0, 1.0) * 255.0).round() as u8;
        coverage[(y * width + x) as usize] = v;
    });
    Some(GlyphBitmap {
        left: bounds.min.x as i32,
        top: bounds.min.y as i32,
        width,
        height,
        coverage,
    })
}

/// Hollow box used when a font has neither U+FFFD nor a drawable `.notdef`.
fn box_glyph(metrics: &FontMetrics, glyph_px: u32) -> GlyphBitmap {
    let width = metrics.advance_px.saturating_sub(2).max(2);
    let height = (glyph_px * 7 / 10).max(3);
    let mut coverage = vec![0u8; (width * height) as usize];
    for y in 0..height {
        for x in 0..width {
            if x == 0 || y == 0 || x == width - 1 || y == height - 1 {
                coverage[(y * width + x) as usize] = 255;
            }
        }
    }
    GlyphBitmap {
        left: 1,
        top: -(height as i32),
        width,
        height,
        coverage,
    }
}

/// Pre-rasterized glyphs for one (font, size). Characters the font does not
/// cover map to the replacement glyph.
#[derive(Debug)]
pub(crate) struct GlyphAtlas {
    glyphs: HashMap<char, Option<Arc<GlyphBitmap>>>,
    missing: HashMap<char, ()>,
}

impl GlyphAtlas {
    pub fn build(
        font: &LoadedFont,
        glyph_px: u32,
        metrics: &FontMetrics,
        chars: impl IntoIterator<Item = char>,
    ) -> Self {
        let f = &font.font;
        let scale = px_scale(f, glyph_px);
        let replacement = {
            let fffd = f.glyph_id('\u{FFFD}');
            let from_font = if fffd.0 != 0 {
                rasterize(f, scale, fffd)
            } else {
                rasterize(f, scale, GlyphId(0))
            };
            Arc::new(from_font.unwrap_or_else(|| box_glyph(metrics, glyph_px)))
        };
        let mut glyphs = HashMap::new();
        let mut missing = HashMap::new();
        for c in chars {
            if glyphs.contains_key(&c) || c == ' ' {
                continue;
            }
            let entry = if c.is_whitespace() {
                None
            } else {
                let id = f.glyph_id(c);
                if id.0 == 0 {
                    missing.insert(c, ());
                    Some(replacement.clone())
                } else {
                    rasterize(f, scale, id).map(Arc::new)
                }
            };
            glyphs.insert(c, entry);
        }
        Self { glyphs, missing }
    }

    pub fn get(&self, c: char) -> Option<&GlyphBitmap> {
        self.glyphs.get(&c).and_then(|g| g.as_deref())
    }

    pub fn is_missing(&self, c: char) -> bool {
        self.missing.contains_key(&c)
    }
}
