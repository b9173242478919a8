use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index ({i}, {j}) out of range for dimension {m}")]
    IndexOutOfRange { i: usize, j: usize, m: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("matrix is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),

    #[error("negative eigenvalue {0:e} in square root")]
    NegativeEigenvalue(f64),

    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("invalid cone: {0}")]
    InvalidCone(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty sample")]
    EmptySample,

    #[error("cones are not nested: distance difference {0:e}")]
    NotNested(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },

    #[error("{failed} of {reps} replicates failed")]
    TooManyFailures { failed: usize, reps: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
