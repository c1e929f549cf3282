use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("variable does not belong to the active computation graph")]
    ForeignGraph,

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{solver} did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("incompatible Neumann data: pattern {pattern} sums to {sum:e}")]
    IncompatiblePattern { pattern: usize, sum: f64 },

    #[error("CFL condition violated at step {step}: courant number {courant:.3} > {limit}")]
    Cfl {
        step: usize,
        courant: f64,
        limit: f64,
    },

    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint {name}: {msg}")]
    Checkpoint { name: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Failures specific to decoding tensor files.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown dtype tag {0}")]
    BadDtype(u8),
    #[error("file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing bytes after payload: {0}")]
    TrailingBytes(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
