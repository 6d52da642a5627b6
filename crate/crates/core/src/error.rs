use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image format error: {0}")]
    Format(String),

    /// A precondition on numeric inputs was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// A distortion model was evaluated where its denominator vanishes or
    /// its invariants fail.
    #[error("model domain error: {0}")]
    ModelDomain(String),

    /// A closed-form inverse has no valid root for the requested point.
    #[error("inversion domain error: {0}")]
    InversionDomain(String),

    /// The signals carry no usable spectral content (e.g. constant images).
    #[error("degenerate signal: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
