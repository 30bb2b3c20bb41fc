use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("basis of {dim} states exceeds the capacity limit of {limit}")]
    Capacity { dim: usize, limit: usize },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown mode: {0}")]
    UnknownMode(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state is not normalized (|norm^2 - 1| = {0:e})")]
    NotNormalized(f64),

    #[error("propagation failed: {0}")]
    Propagation(String),

    #[error("outcome probabilities sum to {sum}, expected 1")]
    ProbabilitySum { sum: f64 },

    #[error("shift precondition violated: weight {0:e} remains on site 0")]
    ShiftPrecondition(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("coherent-state truncation discards weight {0:e}")]
    Leakage(f64),

    #[error("step too coarse: {0}")]
    StepTooCoarse(String),

    #[error("DDE calibration failed: relative amplitude error {0:e} exceeds 1%")]
    Calibration(f64),

    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors caused by the request itself rather than by the numerics.
    pub fn is_configuration(&self) -> bool {
        match self {
            Error::InvalidLayout(_)
            | Error::Capacity { .. }
            | Error::UnknownMode(_)
            | Error::InvalidParameter(_)
            | Error::StepTooCoarse(_)
            | Error::DimensionMismatch { .. } => true,
            Error::Trajectory { source, .. } => source.is_configuration(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
