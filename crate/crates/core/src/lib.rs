//! Situational scene graphs: schema and annotation handling, frame
//! embeddings, visual prompts, the InComNet generation pipeline, evaluation
//! metrics and downstream-task harnesses.

pub mod embed;
pub mod error;
pub mod harness;
pub mod incomnet;
pub mod metrics;
pub mod nn;
pub mod prompt;
pub mod schema;
pub mod synth;

pub use embed::{EmbeddingBackend, EmbeddingVector, LookupBackend, SyntheticBackend};
pub use error::{Result, SsgError};
pub use incomnet::{Checkpoint, InComNet, ModelConfig, PipelineConfig, SsgPrediction};
pub use prompt::{apply_prompt, PromptKind, PromptSpec, Region};
pub use schema::{BBox, EntityKind, FrameStructure, SsgAnnotation};
