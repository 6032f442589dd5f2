use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AswError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid dimensions: {0}")]
    InvalidDimension(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid message: {0}")]
    InvalidMessage(String),

    #[error("invalid distortion: {0}")]
    InvalidDistortion(String),

    #[error("image codec error: {0}")]
    Codec(String),
}

pub type Result<T> = std::result::Result<T, AswError>;
