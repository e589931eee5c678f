//! Crate-wide error type.
//!
//! Library functions validate their inputs eagerly and return one of the
//! variants below instead of panicking; panics are reserved for internal
//! logic bugs.

use std::path::PathBuf;

/// Any error produced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input: non-finite values, empty sets, negative counts, …
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Input is structurally fine but outside the mathematical domain of the
    /// operation (e.g. a point on or beyond the ball boundary).
    #[error("domain error: {0}")]
    Domain(String),

    /// Dimension or shape mismatch between related arguments.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Not enough data to perform the operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The call sequence or requested mode is not usable as configured.
    #[error("usage error: {0}")]
    Usage(String),

    /// An environment or agent protocol violation (e.g. stepping a finished
    /// episode, selecting an id that is not in the unlabeled pool).
    #[error("protocol violation: {0}")]
    Protocol(String),

    /// A text record that could not be parsed, with its 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Inconsistent data that parsed fine (duplicate ids, label out of range).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A computation left the finite range of f64.
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    /// Filesystem failure, tagged with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Config validation report: every violation found, not just the first.
    #[error("invalid config:\n{}", .0.join("\n"))]
    Config(Vec<String>),
}

impl Error {
    /// Wrap an io error with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
