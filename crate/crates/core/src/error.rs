use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed or inconsistent input data (CSV cells, shapes, labels).
    /// The message carries the row/column location where applicable.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A run or learner configuration that violates its preconditions.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A split with an empty train or test side.
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    /// A non-finite value surfaced where the computation must stay finite
    /// (losses, gradients, policy parameters). Never clamped silently.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A training run gave up (too many failed episodes).
    #[error("run aborted: {0}")]
    Aborted(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
