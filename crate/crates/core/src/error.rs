use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:.3e} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },
    #[error("argument outside the function domain: {0}")]
    Domain(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("covariance is numerically singular (eigenvalues {min_eig:.3e} .. {max_eig:.3e})")]
    SingularCovariance { min_eig: f64, max_eig: f64 },
    #[error("stratum {pattern:?} has {count} observation(s); at least 2 are needed")]
    EmptyStratum { pattern: Vec<u8>, count: usize },
    #[error("labels contain a single class ({class})")]
    OneClassOnly { class: u8 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {needed} distinct sample sizes, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("size {size} lies outside the estimated range {lo}..={hi}")]
    OutOfRange { size: usize, lo: usize, hi: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("line {line}, column `{column}`: {message}")]
    Parse { line: u64, column: String, message: String },
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
