use thiserror::Error;

/// Errors raised by the library and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate {value} at index {index} is outside the unit cube")]
    OutsideCube { index: usize, value: f64 },

    #[error("radius {0} must lie in (0, 1/2)")]
    InvalidRadius(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("theta = {theta} outside (0, tau = {tau}]")]
    ThetaOutOfRange { theta: f64, tau: f64 },

    #[error("integer 2^{bits} exceeds the bit budget of {budget} bits")]
    BitBudget { bits: u64, budget: u64 },

    #[error("index {index} outside 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("tail condition fails at k = {k}: {detail}")]
    TailCondition { k: usize, detail: String },

    #[error("no passing point set after {trials} trials (best representativeness {best}, bound {bound})")]
    SelectionFailed { trials: usize, best: f64, bound: f64 },

    #[error("activation `{0}` is only locally Lipschitz")]
    NotGloballyLipschitz(String),

    #[error("unknown activation `{0}`")]
    UnknownActivation(String),

    #[error("non-positive risk {risk} at t = {t}")]
    NonPositiveRisk { t: f64, risk: f64 },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("plot: {0}")]
    Plot(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
