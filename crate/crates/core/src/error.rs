//! Shared error type.

use std::fmt;

/// Errors produced by simulation, training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Cholesky decomposition hit a non-positive pivot.
    NotPositiveDefinite { pivot: usize },
    /// A state or parameter left its admissible domain.
    Domain(String),
    /// Mismatched dimensions (expected, actual).
    Dimension { what: &'static str, expected: usize, actual: usize },
    /// Two objects were built on different time grids.
    GridMismatch(String),
    /// A backward pass was requested with a cache from an older parameter version.
    StaleCache { cache_version: u64, net_version: u64 },
    /// Training produced a NaN or infinite value.
    NumericAbort(String),
    /// Diffusion matrix not invertible at the given path/time.
    SingularDiffusion { path: usize, step: usize },
    /// Checkpoint payload is truncated or inconsistent.
    CorruptCheckpoint(String),
    /// Invalid configuration value.
    Config(String),
    /// I/O failure wrapped with context.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotPositiveDefinite { pivot } => {
                write!(f, "matrix is not positive definite (pivot {pivot})")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Dimension { what, expected, actual } => {
                write!(f, "dimension mismatch for {what}: expected {expected}, got {actual}")
            }
            Error::GridMismatch(msg) => write!(f, "time grid mismatch: {msg}"),
            Error::StaleCache { cache_version, net_version } => write!(
                f,
                "stale forward cache: cache version {cache_version}, network version {net_version}"
            ),
            Error::NumericAbort(msg) => write!(f, "numeric abort: {msg}"),
            Error::SingularDiffusion { path, step } => {
                write!(f, "singular diffusion matrix on path {path} at step {step}")
            }
            Error::CorruptCheckpoint(msg) => write!(f, "corrupt checkpoint: {msg}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
