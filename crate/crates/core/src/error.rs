//! Error type shared across the toolkit.

use thiserror::Error;

/// All fallible operations in this crate return `CoreError`.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A numeric argument fell outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration or inconsistent arguments.
    #[error("invalid config: {0}")]
    Config(String),

    /// Dataset construction or ingestion failure.
    #[error("data error: {0}")]
    Data(String),

    /// Shape mismatch between tensors or between model and data.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Training aborted (non-finite loss or gradient, multiplier overflow).
    #[error("training aborted: {0}")]
    Training(String),

    /// Calibration sweep produced no model inside the target band.
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    /// Model or dataset file could not be read back.
    #[error("serialization error: {0}")]
    Serialization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        CoreError::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        CoreError::Data(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        CoreError::Shape(msg.into())
    }

    pub(crate) fn training(msg: impl Into<String>) -> Self {
        CoreError::Training(msg.into())
    }

    pub(crate) fn serialization(msg: impl Into<String>) -> Self {
        CoreError::Serialization(msg.into())
    }
}
