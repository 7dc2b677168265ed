use std::path::PathBuf;

use thiserror::Error;

/// Every failure the engine can report.
#[derive(Debug, Error)]
pub enum ForoError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("covariance matrix is not positive definite")]
    CovarianceNotPd,
    #[error("candidate {index} has non-finite fitness {value}")]
    NonFiniteFitness { index: usize, value: f64 },
    #[error("no evaluated candidates in history")]
    EmptyHistory,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("activation history has not been initialized")]
    UninitializedHistory,
    #[error("regularizer gamma must be positive, got {0}")]
    NonpositiveGamma(f64),
    #[error("factorization failed: {0}")]
    FactorizationFailure(&'static str),
    #[error("class {0} is already present in the classifier")]
    DuplicateClass(u32),
    #[error("invalid synthetic stream spec: {0}")]
    InvalidSpec(String),
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("checksum mismatch for task {task_id}: manifest {expected}, computed {actual}")]
    ChecksumMismatch {
        task_id: u32,
        expected: String,
        actual: String,
    },
    #[error("class {class} appears in more than one task")]
    OverlappingClasses { class: u32 },
    #[error("malformed feature file {}: {reason}", .path.display())]
    MalformedFeatureFile { path: PathBuf, reason: String },
    #[error("test set of task {0} is empty")]
    EmptyTestSet(usize),
    #[error("accuracy matrix is incomplete: {0}")]
    IncompleteMatrix(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("replay violation: training data of task {0} read after the task completed")]
    ReplayViolation(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ForoError>;
