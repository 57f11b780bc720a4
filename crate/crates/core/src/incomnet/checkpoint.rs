use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, PipelineConfig};
use super::model::InComNet;
use crate::error::{Result, SsgError};
use crate::nn::NamedParam;
use crate::schema::{FrameStructure, SchemaFile};

pub const CHECKPOINT_FORMAT: &str = "ssg-incomnet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized model: config echo, schema hash and every parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub schema_hash: String,
    /// The training schema, so inference needs only the checkpoint.
    pub schema: SchemaFile,
    /// Embedding backend the model was trained against.
    pub backend: String,
    pub model: ModelConfig,
    pub pipeline: PipelineConfig,
    pub params: Vec<NamedParam>,
}

impl Checkpoint {
    /// Panics when `schema` is not the one `model` was built for.
    pub fn capture(model: &InComNet, schema: &FrameStructure, pipeline: &PipelineConfig, backend: &str) -> Self {
        assert_eq!(model.schema_hash(), schema.hash(), "checkpoint schema differs from the model's");
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            schema_hash: model.schema_hash().to_string(),
            schema: schema.schema_file().clone(),
            backend: backend.to_string(),
            model: model.config().clone(),
            pipeline: pipeline.clone(),
            params: model.params().export(),
        }
    }

    /// Rebuilds the model; fails when `schema` is not the training schema.
    pub fn restore(&self, schema: &FrameStructure) -> Result<InComNet> {
        if self.schema_hash != schema.hash() {
            return Err(SsgError::SchemaHashMismatch {
                artifact: self.schema_hash.clone(),
                schema: schema.hash().to_string(),
            });
        }
        let mut model = InComNet::new(schema, &self.model, 0)?;
        model.params_mut().import(&self.params)?;
        Ok(model)
    }

    /// The embedded training schema.
    pub fn schema(&self) -> Result<FrameStructure> {
        FrameStructure::from_schema_file(self.schema.clone())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(SsgError::Checkpoint(format!("unexpected format '{}'", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(SsgError::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        Ok(ckpt)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|e| SsgError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| SsgError::io(path, e))?;
        Self::from_json_str(&text)
    }
}
