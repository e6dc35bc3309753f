use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("non-finite {what} loss (batch reward mean {reward_mean}, target mean {target_mean})")]
    NonFiniteLoss {
        what: &'static str,
        reward_mean: f64,
        target_mean: f64,
    },

    #[error("cannot compute an expectile of an empty sample set")]
    EmptySamples,

    #[error("replay buffer holds {have} transitions, {need} requested")]
    InsufficientSamples { have: usize, need: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot keep {k} atoms per network out of {m}")]
    TruncationTooLarge { k: usize, m: usize },

    #[error("action grid is empty")]
    EmptyActionGrid,

    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),

    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("metrics file {0} does not name its algorithm and environment")]
    UngroupedMetrics(PathBuf),

    #[error("cannot summarize runs from different groups: {0}")]
    MixedGroups(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
