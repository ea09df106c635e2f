use thiserror::Error;

/// Errors raised by the estimators, solvers and generators.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e}, largest {max_eigenvalue:e})")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("penalized fit at rho = {rho} selected no covariates")]
    EmptyModel { rho: f64 },

    #[error("synthetic generation failed: {0}")]
    GenerationFailed(String),

    #[error("cross-validation failed: {0}")]
    CvFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
