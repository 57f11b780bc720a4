//! InComNet: iterative cross-attention pipeline that generates situational
//! scene graphs from prompted frames.

mod checkpoint;
mod config;
mod features;
mod loss;
mod model;
mod predcls;
mod predfile;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{
    FeedbackMode, ModelConfig, PipelineConfig, DEFAULT_ITERATIONS, DEFAULT_LEARNING_RATE, DEFAULT_LR_GAMMA,
};
pub use features::{frame_features, prepare_examples, FrameFeatures, FrameInput, FrameTargets, TextBank, TrainingExample};
pub use loss::{compute_loss, cross_entropy, loss_var};
pub use model::{
    Feedback, ForwardTrace, FrameVars, InComNet, IterationOutput, IterationVars, QueryBank, SsgPrediction, Stage,
    StageCall, StageContext, VerbRoleSource,
};
pub use predcls::{PredclsHeads, PredclsLogits, PredclsSizes, PredclsTargets};
pub use predfile::{
    decode_roles, FramePrediction, ObjectPrediction, PredictionFile, RelationPrediction, RolePrediction,
    PREDICTION_FORMAT, PREDICTION_VERSION,
};
pub use train::{task_accuracy, train, EpochReport, TaskAccuracy, TrainReport};
