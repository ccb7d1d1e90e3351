//! Error types shared across the crate.

use std::io;

use thiserror::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or incompatible options.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input data, reported with its 1-based row number.
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    /// Value outside its documented domain.
    #[error("range error: {0}")]
    Range(String),

    /// Unreadable or version-incompatible checkpoint file.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Internal contract violation; indicates a caller bug.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite value encountered during optimization.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Evaluation input that cannot produce a meaningful metric.
    #[error("evaluation error: {0}")]
    Eval(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
