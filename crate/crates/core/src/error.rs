use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the sampler stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("empty truncation interval [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("degrees of freedom {dof} below dimension {dim}")]
    DofTooSmall { dof: f64, dim: usize },

    #[error("parameter `{name}` must be strictly positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("hit-and-run start point violates the positive-definiteness constraint (quadratic form {quad} >= {omega11})")]
    InfeasibleStart { quad: f64, omega11: f64 },

    #[error("mode search did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("unknown design kind `{0}`")]
    UnknownKind(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("chain aborted at sweep {sweep}: {source}")]
    ChainAborted {
        sweep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Schema { .. } | Error::UnknownKind(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
