use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the SSG toolkit.
#[derive(Debug, Error)]
pub enum SsgError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("role-count out of range: {entity} has {count} roles, allowed [{min}, {max}]")]
    RoleCountOutOfRange {
        entity: String,
        count: usize,
        min: usize,
        max: usize,
    },

    #[error("duplicate role '{role}' in role list of {entity}")]
    DuplicateRole { entity: String, role: String },

    #[error("predicate '{0}' is not allowed in the verb predicate list")]
    ForbiddenPredicate(String),

    #[error("EMPTY_DATASET: no annotations supplied")]
    EmptyDataset,

    #[error("EMPTY_TEXT: cannot embed an empty string")]
    EmptyText,

    #[error("backend '{backend}' lacks {capability} capability")]
    MissingCapability {
        backend: String,
        capability: &'static str,
    },

    #[error("malformed image: {0}")]
    MalformedImage(String),

    #[error("embedding not found in backend '{backend}': {key}")]
    EmbeddingNotFound { backend: String, key: String },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("role count {count} exceeds capacity {capacity} for {stage}")]
    TooManyRoles {
        stage: &'static str,
        count: usize,
        capacity: usize,
    },

    #[error("misaligned instances: {0}")]
    Misaligned(String),

    #[error("schema hash mismatch: built for {artifact}, schema is {schema}")]
    SchemaHashMismatch { artifact: String, schema: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("missing prompted frame: {0}")]
    MissingFrame(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("duplicate id: {0}")]
    DuplicateId(String),
}

pub type Result<T, E = SsgError> = std::result::Result<T, E>;

impl SsgError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SsgError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for SsgError {
    fn from(err: serde_json::Error) -> Self {
        SsgError::Parse(err.to_string())
    }
}
