//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A distribution was built with parameters outside its domain
    /// (non-positive scale, probability outside [0, 1], non-SPD matrix, ...).
    #[error("invalid distribution parameter: {0}")]
    InvalidParam(String),

    /// A run was configured inconsistently: model needs response times the
    /// data set lacks, burn-in at least as long as the run, unknown block
    /// name, initial state outside the prior support, and so on.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A data file could not be parsed. Reported with the offending
    /// one-based row and column so the user can fix the file.
    #[error("bad input at row {row}, column {column}: {message}")]
    Ingest {
        row: usize,
        column: usize,
        message: String,
    },

    /// An operation was handed input it cannot work with (empty draws,
    /// mismatched lengths, labels of a single class).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Stored chains could not be written or read back.
    #[error("persistence error: {0}")]
    Persist(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
