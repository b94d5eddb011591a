use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value produced by layer {layer}")]
    NonFiniteLayer { layer: usize },

    #[error("non-finite gradient in {context}")]
    NonFiniteGradient { context: &'static str },

    #[error("non-finite target score at batch sample {index}")]
    NonFiniteScore { index: usize },

    #[error("non-finite density: {0}")]
    NonFiniteDensity(String),

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("matrix is numerically singular: {0}")]
    Singular(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("HMC failure: {0}")]
    Hmc(String),

    #[error("aborted after {0} consecutive skipped steps")]
    FailureBudget(usize),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Numerical blow-ups that a training loop may skip instead of aborting.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLayer { .. }
                | Error::NonFiniteGradient { .. }
                | Error::NonFiniteScore { .. }
                | Error::NonFiniteDensity(_)
        )
    }
}
