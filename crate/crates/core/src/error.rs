//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not satisfy an operation's contract.
    #[error("shape error: {0}")]
    Shape(String),

    /// An operation produced NaN or Inf from finite inputs.
    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    /// Input outside an operation's numeric domain (e.g. log of a non-positive value).
    #[error("numeric domain error in `{op}`: {message}")]
    NumericDomain { op: &'static str, message: String },

    /// An API contract was violated (e.g. backward on a non-scalar loss).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An index (class label, category code) is out of range.
    #[error("index error: {0}")]
    Index(String),

    /// CSV ingestion failure, with row/column context.
    #[error("ingestion error at row {row}, column `{column}`: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    /// Schema validation failure.
    #[error("schema error: {0}")]
    Schema(String),

    /// Stratified split cannot honour its contract.
    #[error("split error: {0}")]
    Split(String),

    /// Preprocessor fit failure (e.g. constant numeric column).
    #[error("fit error: {0}")]
    Fit(String),

    /// Inverse transform failure (e.g. category code out of range).
    #[error("decode error: {0}")]
    Decode(String),

    /// Training aborted (NaN loss and similar), with the epoch it happened in.
    #[error("training error at epoch {epoch}: {message}")]
    Train { epoch: usize, message: String },

    /// Latent statistics could not be computed.
    #[error("stats error: {0}")]
    Stats(String),

    /// Attack requested on a task it does not support.
    #[error("unsupported task: {0}")]
    Unsupported(String),

    /// Invalid run or attack configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Report generation failure.
    #[error("report error: {0}")]
    Report(String),

    /// Checkpoint container is malformed or incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Numeric routine failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
