use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor/layer shape disagreement.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Invalid argument or configuration value.
    #[error("invalid argument: {0}")]
    Invalid(String),
    /// A forward or backward pass produced NaN or Inf.
    #[error("non-finite value in {op}: {detail}")]
    NonFinite { op: String, detail: String },
    /// Dataset container or record problem.
    #[error("data error: {0}")]
    Data(String),
    /// Checkpoint file problem (corrupt, wrong version, wrong network).
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn checkpoint(msg: impl Into<String>) -> Self {
        Error::Checkpoint(msg.into())
    }
}
