use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model is not stationary: {0}")]
    NonStationary(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("probability {prob} is not attainable (distribution function tops out at {max})")]
    Unattainable { prob: f64, max: f64 },

    #[error("unsupported task: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
