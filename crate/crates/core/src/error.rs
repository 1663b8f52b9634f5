use thiserror::Error;

/// Errors produced by the numerical layers of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument {value} outside the open interval (-1, 1)")]
    Domain { value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("input has nonzero mean {mean:e} (norm {norm:e})")]
    NonZeroMean { mean: f64, norm: f64 },
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("operation not supported on this domain: {0}")]
    UnsupportedDomain(&'static str),
    #[error("Newton iteration did not converge: residual {residual:e} after {iterations} iterations")]
    NewtonDiverged { residual: f64, iterations: usize },
    #[error("linear solve failed: {0}")]
    LinearSolveFailed(String),
    #[error("state carries no step history")]
    StaleState,
    #[error("at t = {t}: {source}")]
    AtTime { t: f64, source: Box<Error> },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("inadmissible test function #{index}: {reason}")]
    InadmissibleTestFunction { index: usize, reason: String },
    #[error("integration step collapsed to {step:e} at x = {x}")]
    StiffnessFailure { x: f64, step: f64 },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
