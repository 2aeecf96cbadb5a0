use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} outside [{tmin}, {tmax}]")]
    TimeOutOfRange { t: f64, tmin: f64, tmax: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("model failed validation:\n{0}")]
    Validation(String),

    #[error("evidence has zero likelihood under the model (filter step {step})")]
    ImpossibleEvidence { step: usize },

    #[error("product state space of size {size} exceeds cap {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
