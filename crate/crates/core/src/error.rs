use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LfaError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is numerically singular (relative pivot {pivot:.3e})")]
    Singular { pivot: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,

    #[error("spectrum is not real (max |Im| = {max_imag:.3e}, tolerance {tol:.3e})")]
    NonRealSpectrum { max_imag: f64, tol: f64 },

    #[error("spectrum is degenerate: {0}")]
    DegenerateSpectrum(String),

    #[error("Arnoldi breakdown: {0}")]
    Breakdown(String),

    #[error("at theta = ({t1:.6}, {t2:.6}): {source}")]
    AtFrequency { t1: f64, t2: f64, source: Box<LfaError> },

    #[error("{0}")]
    Evaluation(String),
}

pub type Result<T> = std::result::Result<T, LfaError>;
