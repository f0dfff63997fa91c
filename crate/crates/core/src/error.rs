use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::Rect;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {0} exceeds the supported maximum of {max}", max = crate::geometry::MAX_DIM)]
    DimensionTooLarge(usize),

    #[error("non-finite function value {value} at {point:?}")]
    NonFinite { point: Vec<f64>, value: f64 },

    #[error("precondition failed: {reason}")]
    Precondition {
        reason: String,
        witness: Option<(Rect, f64)>,
    },

    #[error("grid file {path}: line {line}: {message}")]
    GridFormat {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unknown zoo function `{0}`")]
    UnknownFunction(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
