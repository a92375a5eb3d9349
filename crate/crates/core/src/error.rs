use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pathloss {pathloss} dB exceeds the codec maximum {max} dB")]
    PathlossAboveMax { pathloss: f64, max: f64 },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scene generation failed: {0}")]
    GenerationFailure(String),

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("file not found: {0}")]
    NotFound(PathBuf),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("only {available} eligible free pixels, {requested} requested")]
    InsufficientFreePixels { requested: usize, available: usize },

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("split produced an empty {0} partition")]
    EmptySplit(&'static str),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Errors caused by bad inputs or configuration, as opposed to failures
    /// while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Config(_)
                | Error::Shape(_)
                | Error::Index { .. }
                | Error::PathlossAboveMax { .. }
                | Error::Json(_)
        )
    }
}
