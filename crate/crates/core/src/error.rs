use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("outside dispersion validity window: {0}")]
    Domain(String),

    #[error("invalid basis: {0}")]
    Basis(String),

    #[error("rank deficient: {0}")]
    Rank(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("SLM mapping error: {0}")]
    Mapping(String),

    #[error("degenerate bin {index}: projection signal is zero")]
    DegenerateBin { index: usize },

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("unsupported dimension {0}; CGLMP thresholds are stored for d = 2, 3, 4")]
    UnsupportedDimension(usize),

    #[error("fit did not converge after {iterations} iterations (cost {cost:.3e}, last step {step:.3e})")]
    Fit {
        iterations: usize,
        cost: f64,
        step: f64,
    },
}
