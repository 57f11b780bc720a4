//! Vision and text embedding backends.
//!
//! Every pipeline stage consumes fixed-dimension vectors produced by a
//! [`EmbeddingBackend`]. The [`SyntheticBackend`] hashes its input into a
//! seeded unit vector, which gives content-sensitive, reproducible features
//! without a pretrained model. [`LookupBackend`] is the seam for a pretrained
//! joint vision-language encoder: features are computed out of process and
//! served from a table, unchanged.

use std::collections::HashMap;
use std::path::Path;

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SsgError};

/// Dimension of the base configuration.
pub const BASE_DIM: usize = 512;
/// Dimension of the large configuration.
pub const LARGE_DIM: usize = 768;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SsgError::InvalidDimension("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SsgError::InvalidDimension("non-finite embedding entry".into()));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector { values: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        dot / (self.norm() * other.norm())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub vision: bool,
    pub text: bool,
}

/// A vision encoder and a text encoder sharing one embedding space.
///
/// Implementations must be deterministic: the same input yields a
/// bit-identical vector for the lifetime of the process.
pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn capabilities(&self) -> Capabilities;
    fn embed_image(&self, image: &RgbImage) -> Result<EmbeddingVector>;
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector>;
}

fn stable_seed(domain: &[u8], content: &[u8]) -> u64 {
    let mut h = Sha256::new();
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain);
    h.update(content);
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn seeded_unit_vector(seed: u64, dim: usize) -> EmbeddingVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut values {
        *v /= norm;
    }
    EmbeddingVector { values }
}

/// Unit-norm pseudo-random vector seeded by a stable 64-bit hash of
/// `seed_string`.
pub fn synthetic_embed(seed_string: &str, dim: usize) -> Result<EmbeddingVector> {
    if dim == 0 {
        return Err(SsgError::InvalidDimension("dim must be positive".into()));
    }
    Ok(seeded_unit_vector(stable_seed(b"text", seed_string.as_bytes()), dim))
}

fn image_bytes(image: &RgbImage) -> Result<Vec<u8>> {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return Err(SsgError::MalformedImage("image has no pixels".into()));
    }
    let mut bytes = Vec::with_capacity(8 + image.as_raw().len());
    bytes.extend_from_slice(&w.to_le_bytes());
    bytes.extend_from_slice(&h.to_le_bytes());
    bytes.extend_from_slice(image.as_raw());
    Ok(bytes)
}

/// Hex SHA-256 of an image's dimensions and raw RGB bytes; the key used by
/// [`LookupBackend`] image tables.
pub fn image_key(image: &RgbImage) -> Result<String> {
    let bytes = image_bytes(image)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Deterministic hashing backend for tests and desk-scale runs.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    dim: usize,
}

impl SyntheticBackend {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(SsgError::InvalidDimension("dim must be positive".into()));
        }
        Ok(SyntheticBackend { dim })
    }
}

impl EmbeddingBackend for SyntheticBackend {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { vision: true, text: true }
    }

    fn embed_image(&self, image: &RgbImage) -> Result<EmbeddingVector> {
        let bytes = image_bytes(image)?;
        Ok(seeded_unit_vector(stable_seed(b"image", &bytes), self.dim))
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        if text.is_empty() {
            return Err(SsgError::EmptyText);
        }
        synthetic_embed(text, self.dim)
    }
}

/// Table of precomputed features, as written by an external encoder.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LookupTable {
    pub name: String,
    pub dim: usize,
    #[serde(default)]
    pub text: HashMap<String, Vec<f64>>,
    /// Keyed by [`image_key`].
    #[serde(default)]
    pub image: HashMap<String, Vec<f64>>,
}

/// Adapter for a pretrained encoder whose outputs were exported to a
/// [`LookupTable`]. Vectors are passed through without normalization.
#[derive(Debug, Clone)]
pub struct LookupBackend {
    table: LookupTable,
}

impl LookupBackend {
    pub fn new(table: LookupTable) -> Result<Self> {
        if table.dim == 0 {
            return Err(SsgError::InvalidDimension("dim must be positive".into()));
        }
        for v in table.text.values().chain(table.image.values()) {
            if v.len() != table.dim {
                return Err(SsgError::DimensionMismatch {
                    expected: table.dim,
                    actual: v.len(),
                });
            }
        }
        Ok(LookupBackend { table })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SsgError::io(path, e))?;
        Self::new(serde_json::from_str(&text)?)
    }
}

impl EmbeddingBackend for LookupBackend {
    fn name(&self) -> &str {
        &self.table.name
    }

    fn dim(&self) -> usize {
        self.table.dim
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            vision: !self.table.image.is_empty(),
            text: !self.table.text.is_empty(),
        }
    }

    fn embed_image(&self, image: &RgbImage) -> Result<EmbeddingVector> {
        if !self.capabilities().vision {
            return Err(SsgError::MissingCapability {
                backend: self.table.name.clone(),
                capability: "vision",
            });
        }
        let key = image_key(image)?;
        let v = self.table.image.get(&key).ok_or_else(|| SsgError::EmbeddingNotFound {
            backend: self.table.name.clone(),
            key: key.clone(),
        })?;
        EmbeddingVector::new(v.clone())
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        if text.is_empty() {
            return Err(SsgError::EmptyText);
        }
        if !self.capabilities().text {
            return Err(SsgError::MissingCapability {
                backend: self.table.name.clone(),
                capability: "text",
            });
        }
        let v = self.table.text.get(text).ok_or_else(|| SsgError::EmbeddingNotFound {
            backend: self.table.name.clone(),
            key: text.to_string(),
        })?;
        EmbeddingVector::new(v.clone())
    }
}

/// Parses a `--backend` value: `synthetic` or `external:<table.json>`.
pub fn backend_from_spec(spec: &str, dim: usize) -> Result<Box<dyn EmbeddingBackend>> {
    if spec == "synthetic" {
        return Ok(Box::new(SyntheticBackend::new(dim)?));
    }
    if let Some(path) = spec.strip_prefix("external:") {
        let backend = LookupBackend::load(path)?;
        if backend.dim() != dim {
            return Err(SsgError::DimensionMismatch {
                expected: dim,
                actual: backend.dim(),
            });
        }
        return Ok(Box::new(backend));
    }
    Err(SsgError::Config(format!("unknown backend '{spec}'")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn img(seed: u8) -> RgbImage {
        RgbImage::from_fn(8, 8, |x, y| Rgb([x as u8, y as u8, seed]))
    }

    #[test]
    fn image_embedding_has_backend_dim() {
        let b = SyntheticBackend::new(BASE_DIM).unwrap();
        assert_eq!(b.embed_image(&img(0)).unwrap().dim(), 512);
    }

    #[test]
    fn image_embedding_is_deterministic() {
        let b = SyntheticBackend::new(BASE_DIM).unwrap();
        assert_eq!(b.embed_image(&img(3)).unwrap(), b.embed_image(&img(3)).unwrap());
    }

    #[test]
    fn one_pixel_changes_the_vector() {
        let b = SyntheticBackend::new(BASE_DIM).unwrap();
        let a = img(3);
        let mut c = a.clone();
        c.put_pixel(7, 7, Rgb([1, 2, 3]));
        let (ea, ec) = (b.embed_image(&a).unwrap(), b.embed_image(&c).unwrap());
        assert_ne!(ea, ec);
        // the oracle: the seed is a hash of the raw bytes, so equal bytes give equal vectors
        assert_eq!(ea, seeded_unit_vector(stable_seed(b"image", &image_bytes(&a).unwrap()), 512));
        assert!(ea.cosine(&ec) < 0.5);
    }

    #[test]
    fn empty_image_is_malformed() {
        let b = SyntheticBackend::new(BASE_DIM).unwrap();
        assert!(matches!(b.embed_image(&RgbImage::new(0, 0)), Err(SsgError::MalformedImage(_))));
    }

    #[test]
    fn text_embedding_contracts() {
        let b = SyntheticBackend::new(BASE_DIM).unwrap();
        assert_eq!(b.embed_text("person").unwrap().dim(), 512);
        assert!(matches!(b.embed_text(""), Err(SsgError::EmptyText)));
        let lower = b.embed_text("holding").unwrap();
        let upper = b.embed_text("Holding").unwrap();
        assert_ne!(lower, upper);
        assert_eq!(lower, synthetic_embed("holding", 512).unwrap());
    }

    #[test]
    fn synthetic_embed_is_unit_norm() {
        for dim in [4, 512, 768] {
            let v = synthetic_embed("cup", dim).unwrap();
            assert_eq!(v.dim(), dim);
            assert!((v.norm() - 1.0).abs() < 1e-6);
        }
        assert!(synthetic_embed("cup", 0).is_err());
    }

    #[test]
    fn distinct_strings_are_nearly_orthogonal() {
        let words = crate::synth::reference_schema().all_values().to_vec();
        let vecs: Vec<_> = words.iter().map(|w| synthetic_embed(w, 512).unwrap()).collect();
        let mut worst = f64::MIN;
        for i in 0..vecs.len() {
            for j in i + 1..vecs.len() {
                worst = worst.max(vecs[i].cosine(&vecs[j]));
            }
        }
        assert!(worst < 0.5, "max cosine {worst}");
        assert!(synthetic_embed("cup", 512).unwrap().cosine(&synthetic_embed("dish", 512).unwrap()) < 0.5);
    }

    #[test]
    fn lookup_backend_passes_vectors_through() {
        let image = img(9);
        let mut table = LookupTable {
            name: "clip-export".into(),
            dim: 3,
            ..Default::default()
        };
        table.text.insert("person".into(), vec![3.0, 0.0, 4.0]);
        table.image.insert(image_key(&image).unwrap(), vec![1.0, 2.0, 2.0]);
        let b = LookupBackend::new(table).unwrap();
        assert_eq!(b.embed_text("person").unwrap().as_slice(), &[3.0, 0.0, 4.0]);
        assert_eq!(b.embed_image(&image).unwrap().as_slice(), &[1.0, 2.0, 2.0]);
        assert!(matches!(b.embed_text("cup"), Err(SsgError::EmbeddingNotFound { .. })));
    }

    #[test]
    fn lookup_without_images_lacks_vision() {
        let mut table = LookupTable {
            name: "text-only".into(),
            dim: 2,
            ..Default::default()
        };
        table.text.insert("a".into(), vec![1.0, 0.0]);
        let b = LookupBackend::new(table).unwrap();
        assert!(matches!(b.embed_image(&img(0)), Err(SsgError::MissingCapability { .. })));
    }

    #[test]
    fn backend_spec_parsing() {
        assert_eq!(backend_from_spec("synthetic", 768).unwrap().dim(), 768);
        assert!(backend_from_spec("clip", 512).is_err());
    }
}
