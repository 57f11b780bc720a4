//! Visual prompts: builds the prompted frame from an image and a region of
//! interest.

use std::fmt;
use std::str::FromStr;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsgError};
use crate::schema::BBox;

pub const DEFAULT_OVERLAY: [u8; 3] = [255, 192, 203];
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    /// Overlay blended outside the region, region untouched.
    TranslucentBackground,
    /// Overlay blended inside the region, background untouched.
    Color,
    /// Background zeroed, region untouched.
    Padding,
}

impl FromStr for PromptKind {
    type Err = SsgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "translucent_background" => Ok(PromptKind::TranslucentBackground),
            "color" => Ok(PromptKind::Color),
            "padding" => Ok(PromptKind::Padding),
            other => Err(SsgError::InvalidPrompt(format!("unknown prompt kind '{other}'"))),
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptKind::TranslucentBackground => "translucent_background",
            PromptKind::Color => "color",
            PromptKind::Padding => "padding",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub kind: PromptKind,
    pub overlay_rgb: [u8; 3],
    pub alpha: f64,
}

impl Default for PromptSpec {
    fn default() -> Self {
        PromptSpec::new(PromptKind::TranslucentBackground)
    }
}

impl PromptSpec {
    pub fn new(kind: PromptKind) -> Self {
        PromptSpec {
            kind,
            overlay_rgb: DEFAULT_OVERLAY,
            alpha: DEFAULT_ALPHA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != PromptKind::Padding && !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SsgError::InvalidPrompt(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// Union of rectangles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub boxes: Vec<BBox>,
}

impl Region {
    pub fn single(b: BBox) -> Self {
        Region { boxes: vec![b] }
    }

    pub fn union(a: BBox, b: BBox) -> Self {
        Region { boxes: vec![a, b] }
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        self.boxes.iter().any(|b| b.contains(x, y))
    }
}

/// `round(alpha * overlay + (1 - alpha) * pixel)`, halves rounded up.
pub fn blend_channel(pixel: u8, overlay: u8, alpha: f64) -> u8 {
    let v = alpha * f64::from(overlay) + (1.0 - alpha) * f64::from(pixel);
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn blend(p: &Rgb<u8>, spec: &PromptSpec) -> Rgb<u8> {
    Rgb([
        blend_channel(p[0], spec.overlay_rgb[0], spec.alpha),
        blend_channel(p[1], spec.overlay_rgb[1], spec.alpha),
        blend_channel(p[2], spec.overlay_rgb[2], spec.alpha),
    ])
}

pub fn apply_prompt(image: &RgbImage, region: &Region, spec: &PromptSpec) -> Result<RgbImage> {
    spec.validate()?;
    if region.boxes.is_empty() || region.boxes.iter().all(|b| b.w <= 0 || b.h <= 0) {
        return Err(SsgError::InvalidRegion("empty region".into()));
    }
    let (w, h) = image.dimensions();
    let (w, h) = (i64::from(w), i64::from(h));
    let intersects = region
        .boxes
        .iter()
        .any(|b| b.w > 0 && b.h > 0 && b.x < w && b.y < h && b.right() > 0 && b.bottom() > 0);
    if !intersects {
        return Err(SsgError::InvalidRegion("region lies outside the image".into()));
    }

    let mut out = image.clone();
    for (x, y, p) in out.enumerate_pixels_mut() {
        let inside = region.contains(i64::from(x), i64::from(y));
        match (spec.kind, inside) {
            (PromptKind::TranslucentBackground, false) | (PromptKind::Color, true) => *p = blend(p, spec),
            (PromptKind::Padding, false) => *p = Rgb([0, 0, 0]),
            _ => {}
        }
    }
    Ok(out)
}
