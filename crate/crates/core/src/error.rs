use thiserror::Error;

pub type Result<T, E = RoughVolError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoughVolError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("incompatible density grids")]
    IncompatibleGrids,

    #[error("non-finite value on path {path} at step {step}: {detail}")]
    NumericalOverflow {
        path: usize,
        step: usize,
        detail: String,
    },

    #[error("calibration failed after {evaluations} evaluations: {reason}")]
    CalibrationFailed { evaluations: usize, reason: String },
}

impl RoughVolError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Self::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidParameter(msg.into())
    }
}
