use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("no unstable pair")]
    NoUnstablePair,

    #[error("more unstable modes than supported: found {0}, at most 2 are handled")]
    TooManyUnstable(usize),

    #[error("eigenvalue on the imaginary axis: {0}")]
    OnImaginaryAxis(String),

    #[error("defective eigenstructure beyond tolerance: {0}")]
    Defective(String),

    #[error("pair is not stabilizable")]
    NotStabilizable,

    #[error("pair is not detectable")]
    NotDetectable,

    #[error("riccati solver failed: {reason} (relative residual {residual:.3e})")]
    Riccati { reason: String, residual: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("iteration did not converge: {0}")]
    Convergence(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
