use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsgError};

/// Pixel rectangle `[x, y, w, h]`, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i64; 4]", into = "[i64; 4]")]
pub struct BBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl BBox {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn contains(&self, px: i64, py: i64) -> bool {
        px >= self.x && py >= self.y && px < self.x + self.w && py < self.y + self.h
    }

    pub fn right(&self) -> i64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> i64 {
        self.y + self.h
    }
}

impl From<[i64; 4]> for BBox {
    fn from(v: [i64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [i64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonAnnotation {
    pub bbox: BBox,
    #[serde(default)]
    pub srv: IndexMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unsure: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub instance_id: String,
    pub category: String,
    pub bbox: BBox,
    #[serde(default)]
    pub srv: IndexMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unsure: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationAnnotation {
    pub object_instance_id: String,
    pub predicate: String,
    #[serde(default)]
    pub srv: IndexMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unsure: Vec<String>,
}

/// Ground truth for one video frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsgAnnotation {
    #[serde(skip)]
    pub video_id: String,
    pub frame_id: String,
    /// `[width, height]` of the frame image, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<[u32; 2]>,
    pub person: PersonAnnotation,
    #[serde(default)]
    pub objects: Vec<ObjectAnnotation>,
    #[serde(default)]
    pub relations: Vec<RelationAnnotation>,
    #[serde(default)]
    pub actions: Vec<String>,
}

impl SsgAnnotation {
    pub fn object(&self, instance_id: &str) -> Option<(usize, &ObjectAnnotation)> {
        self.objects.iter().enumerate().find(|(_, o)| o.instance_id == instance_id)
    }
}

/// One annotation document: all annotated frames of a video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoDocument {
    pub video_id: String,
    pub frames: Vec<SsgAnnotation>,
}

impl VideoDocument {
    pub fn into_annotations(self) -> Vec<SsgAnnotation> {
        let VideoDocument { video_id, frames } = self;
        frames
            .into_iter()
            .map(|mut f| {
                f.video_id = video_id.clone();
                f
            })
            .collect()
    }

    /// Groups annotations by video id, keeping first-seen order.
    pub fn group(annotations: &[SsgAnnotation]) -> Vec<VideoDocument> {
        let mut docs: IndexMap<&str, Vec<SsgAnnotation>> = IndexMap::new();
        for a in annotations {
            docs.entry(a.video_id.as_str()).or_default().push(a.clone());
        }
        docs.into_iter()
            .map(|(video_id, frames)| VideoDocument {
                video_id: video_id.to_string(),
                frames,
            })
            .collect()
    }
}

pub fn parse_video_document(text: &str) -> Result<Vec<SsgAnnotation>> {
    let doc: VideoDocument = serde_json::from_str(text)?;
    Ok(doc.into_annotations())
}

pub fn write_video_document(video_id: &str, frames: &[SsgAnnotation]) -> String {
    let doc = VideoDocument {
        video_id: video_id.to_string(),
        frames: frames.to_vec(),
    };
    serde_json::to_string_pretty(&doc).expect("annotation serializes")
}

pub fn load_video_file(path: impl AsRef<Path>) -> Result<Vec<SsgAnnotation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SsgError::io(path, e))?;
    parse_video_document(&text).map_err(|e| SsgError::Parse(format!("{}: {e}", path.display())))
}

/// Loads one annotation file, or every `*.json` file of a directory in
/// lexicographic order.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<SsgAnnotation>> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| SsgError::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            out.extend(load_video_file(&f)?);
        }
        Ok(out)
    } else {
        load_video_file(path)
    }
}
