use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the resampling engine.
#[derive(Debug, Error)]
pub enum LerfError {
    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Malformed binary or text file; `offset` is the byte (or token) position.
    #[error("format error at offset {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("kernel misuse: {0}")]
    Misuse(String),
}

impl LerfError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LerfError::Io { path: path.into(), source }
    }

    pub(crate) fn format(offset: usize, reason: impl Into<String>) -> Self {
        LerfError::Format { offset, reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, LerfError>;
