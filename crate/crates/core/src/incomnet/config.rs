use serde::{Deserialize, Serialize};

use crate::error::{Result, SsgError};
use crate::nn::EncoderConfig;

/// Default number of refinement iterations over stages I–III.
pub const DEFAULT_ITERATIONS: usize = 10;
pub const DEFAULT_LEARNING_RATE: f64 = 0.001;
/// Per-epoch exponential learning-rate decay.
pub const DEFAULT_LR_GAMMA: f64 = 0.95;

/// How an object with several relations receives verb feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// Verb query of the object's first relation (relation list order).
    First,
    /// Mean of the verb queries of all the object's relations.
    Mean,
}

/// Architecture of the four encoders and their heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Hide zero-padded key/value slots from attention.
    pub mask_padding: bool,
    pub feedback: FeedbackMode,
    /// Std of the learnable query initialization.
    pub query_init_std: f64,
    /// Feed the object-name embedding to the verb-predicate stage. Disabling
    /// it masks that slot (ablation only).
    #[serde(default = "enabled")]
    pub verb_stage_object_name: bool,
}

fn enabled() -> bool {
    true
}

impl ModelConfig {
    pub fn new(dim: usize) -> Self {
        ModelConfig {
            encoder: EncoderConfig::new(dim),
            mask_padding: true,
            feedback: FeedbackMode::First,
            query_init_std: 1.0,
            verb_stage_object_name: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()
    }
}

/// Optimization settings of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Iterations `d` of stages I–III, used for training and inference.
    pub iterations: usize,
    pub learning_rate: f64,
    pub lr_gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            iterations: DEFAULT_ITERATIONS,
            learning_rate: DEFAULT_LEARNING_RATE,
            lr_gamma: DEFAULT_LR_GAMMA,
            epochs: 100,
            batch_size: 4,
            seed: 7,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(SsgError::Config("iterations must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(SsgError::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.lr_gamma > 0.0 && self.lr_gamma <= 1.0) {
            return Err(SsgError::Config("learning rate must be positive and gamma in (0, 1]".into()));
        }
        Ok(())
    }
}
