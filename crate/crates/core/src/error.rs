use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    Format(String),

    #[error("degenerate vector: norm below {threshold:e}")]
    DegenerateVector { threshold: f64 },

    #[error("region too small for estimator: {width}x{height}, need at least {min}x{min}")]
    RegionTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("degenerate image: {0}")]
    DegenerateImage(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid illusion spec: {0}")]
    DegenerateSpec(String),

    #[error("sparse field has no usable entries")]
    EmptyField,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid document {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that a blockwise caller should absorb with a fallback
    /// illuminant instead of aborting the run.
    pub fn is_degenerate_estimate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateVector { .. } | Error::RegionTooSmall { .. }
        )
    }
}
