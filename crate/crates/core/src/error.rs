use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A file exists but does not follow the expected layout.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    /// Declared sizes disagree with the stored payload.
    #[error("corrupt data in {path}: {msg}")]
    Corruption { path: PathBuf, msg: String },

    /// Input values violate a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A caller-supplied argument is out of range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The input is mathematically degenerate (zero trace, zero denominator).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A numerical routine failed, e.g. a matrix that should be positive
    /// definite is not.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Layer shapes are incompatible.
    #[error("shape error: {0}")]
    Shape(String),

    #[error("failed to write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },

    #[error("failed to read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
