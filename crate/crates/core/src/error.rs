use thiserror::Error;

/// Errors raised by filters, samplers and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid categorical weights")]
    InvalidCategoricalWeights,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stopping-time cap exceeded at step {step}: {draws} draws with {accepted} of {target} accepted")]
    CapExceeded {
        step: usize,
        draws: usize,
        accepted: usize,
        target: usize,
    },

    #[error("particle death at step {step}: every weight is zero")]
    ParticleDeath { step: usize },

    #[error("degenerate twist at step {step}: {what} is not a positive finite value")]
    DegenerateTwist { step: usize, what: &'static str },

    #[error("model does not provide an observation density")]
    MissingDensity,

    #[error("zero variance")]
    ZeroVariance,

    #[error("invalid input data: {0}")]
    Data(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
