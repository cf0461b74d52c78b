//! One flat error type for the whole crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A numeric argument is outside the domain where the quantity is defined.
    #[error("domain: {0}")]
    Domain(String),

    /// Structurally malformed input: length mismatches, empty slices, bad labels.
    #[error("input: {0}")]
    Input(String),

    /// A stated precondition of a bound or an algorithm does not hold.
    #[error("precondition: {0}")]
    Precondition(String),

    /// A sampling distribution has no mass to normalize.
    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    /// Experiment or run configuration is invalid.
    #[error("config: {0}")]
    Config(String),

    /// Grid search found no step size that finished a run.
    #[error("grid search: {0}")]
    NoWinner(String),

    /// Too few completed traces to aggregate.
    #[error("summary: {0}")]
    Summary(String),

    #[error("{path}: bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    IdxMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{path}: truncated IDX payload: expected {expected} bytes, found {found}")]
    IdxTruncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("idx: {0}")]
    IdxShape(String),

    #[error("trace csv line {line}: {msg}")]
    TraceParse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
