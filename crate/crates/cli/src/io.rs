use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use image::RgbImage;
use ssg_core::schema::{write_video_document, SsgAnnotation, VideoDocument};

/// Frame image of `ann` under `dir/<video_id>/<frame_id>`; a frame id without
/// extension is tried with `.png`, `.jpg` and `.jpeg`.
pub fn frame_image_path(dir: &Path, ann: &SsgAnnotation) -> Result<PathBuf> {
    let base = dir.join(&ann.video_id).join(&ann.frame_id);
    if base.is_file() {
        return Ok(base);
    }
    for ext in ["png", "jpg", "jpeg"] {
        let p = base.with_extension(ext);
        if p.is_file() {
            return Ok(p);
        }
    }
    bail!("no image for frame {}/{} under {}", ann.video_id, ann.frame_id, dir.display())
}

pub fn load_frame_images(dir: &Path, anns: &[SsgAnnotation]) -> Result<Vec<RgbImage>> {
    anns.iter()
        .map(|a| {
            let p = frame_image_path(dir, a)?;
            let img = image::open(&p).with_context(|| format!("reading {}", p.display()))?;
            Ok(img.to_rgb8())
        })
        .collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes one annotation document per video into `dir`.
pub fn write_dataset(dir: &Path, anns: &[SsgAnnotation]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for doc in VideoDocument::group(anns) {
        write_text(&dir.join(format!("{}.json", doc.video_id)), &write_video_document(&doc.video_id, &doc.frames))?;
    }
    Ok(())
}

pub fn save_image(path: &Path, img: &RgbImage) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    img.save(path).map_err(|e| anyhow!("writing {}: {e}", path.display()))
}

/// Parses `x,y,w,h`.
pub fn parse_bbox(s: &str) -> Result<ssg_core::BBox> {
    let v: Vec<i64> = s
        .split(',')
        .map(|t| t.trim().parse::<i64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad box '{s}', expected x,y,w,h"))?;
    match v.as_slice() {
        [x, y, w, h] => Ok(ssg_core::BBox::new(*x, *y, *w, *h)),
        _ => bail!("bad box '{s}', expected x,y,w,h"),
    }
}

/// Parses `r,g,b`.
pub fn parse_rgb(s: &str) -> Result<[u8; 3]> {
    let v: Vec<u8> = s
        .split(',')
        .map(|t| t.trim().parse::<u8>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad color '{s}', expected r,g,b"))?;
    match v.as_slice() {
        [r, g, b] => Ok([*r, *g, *b]),
        _ => bail!("bad color '{s}', expected r,g,b"),
    }
}
