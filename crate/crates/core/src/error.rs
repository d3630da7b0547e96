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

    #[error("format error: {0}")]
    Format(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Factorization or non-finite arithmetic failure. `detail` carries the
    /// offending pivot or condition estimate.
    #[error("numeric error: {detail}")]
    Numeric { detail: String },

    #[error("planning error: {0}")]
    Planning(String),

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn numeric(detail: impl Into<String>) -> Self {
        Error::Numeric {
            detail: detail.into(),
        }
    }
}
