//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file (ragged rows, empty file, bad container layout).
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    /// A cell or field failed to parse as a number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Invalid argument or configuration value.
    #[error("invalid config: {0}")]
    Config(String),

    /// Tensor/layer dimension mismatch.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A stratified split could not be formed.
    #[error("stratification error: {0}")]
    Stratify(String),

    /// NaN or infinity where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Model is missing a training stage required by the operation.
    #[error("model not trained: {0}")]
    Untrained(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
