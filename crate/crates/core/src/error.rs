use thiserror::Error;

/// Errors raised by the simulator and receiver algebra.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular or too ill-conditioned to invert: {0}")]
    SingularMatrix(String),

    #[error("matrix is not Hermitian positive semidefinite: {0}")]
    NotPsd(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("invalid resource grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("variance must be strictly positive, got {0}")]
    DegenerateVariance(f64),

    #[error("channel gain has a zero entry at resource element {0}")]
    DegenerateChannel(usize),

    #[error("io failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed results file: {0}")]
    Parse(String),

    #[error("frame {frame} failed: {source}")]
    Frame {
        frame: u64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
