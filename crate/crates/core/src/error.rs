use thiserror::Error;

/// Errors raised by the solver, the monitors and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("incompatible Poisson data: slice mean {mean:e} exceeds {limit:e}")]
    IncompatiblePoisson { mean: f64, limit: f64 },

    #[error("admissibility lost at t = {t}: min lambda = {min_lambda:e}, min eta = {min_eta:e}")]
    AdmissibilityLost {
        t: f64,
        min_lambda: f64,
        min_eta: f64,
    },

    #[error("background is not positive: {0}")]
    Positivity(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("beta = {beta} is at or below the universal threshold {beta0}")]
    BelowThreshold { beta: f64, beta0: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("field header error: {0}")]
    Header(String),

    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("unsupported expression node: {0}")]
    UnsupportedExpr(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
