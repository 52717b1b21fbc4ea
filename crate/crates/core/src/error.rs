use thiserror::Error;

/// Errors raised by model construction, path sampling and the estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {field}: {reason}")]
    InvalidModel { field: &'static str, reason: String },

    #[error("invalid test function: {0}")]
    InvalidF(String),

    #[error("estimator inapplicable: {0}")]
    Inapplicable(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("large-jump threshold {threshold} is below the jump cutoff {cutoff}")]
    ThresholdBelowCutoff { threshold: f64, cutoff: f64 },

    #[error("conditioning event had zero effective samples out of {n}")]
    NoEffectiveSamples { n: u64 },

    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
