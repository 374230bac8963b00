use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("localized prior class is empty: no prior matches the pilot within radius {radius}")]
    EmptyLocalizedClass { radius: f64 },

    #[error("conic program is unbounded")]
    Unbounded,

    #[error("numerical failure: {0}")]
    NumericFailure(String),

    #[error("functional `{functional}` is not representable over class `{class}`")]
    UnsupportedFunctional { functional: String, class: String },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
