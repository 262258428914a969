use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-monotone envelope: {0}")]
    NonMonotoneEnvelope(String),

    #[error("negative data rejected: {0}")]
    NegativeData(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mollifier support leaves the domain: {0}")]
    SupportViolation(String),

    #[error("decomposition budget infeasible: {0}")]
    BudgetInfeasible(String),

    #[error("Newton failed to converge after {iterations} iterations (scaled residual {residual:.3e})")]
    StepFailure { iterations: usize, residual: f64 },

    #[error("solve failed at time level {level}: {source}")]
    TimeStep {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("time window violation: {0}")]
    WindowViolation(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
