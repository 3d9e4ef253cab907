use thiserror::Error;

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid config `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("device {device_id} has no reference devices")]
    NoReferences { device_id: u32 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Core(#[from] dropsync_core::Error),
    #[error(transparent)]
    Neural(#[from] dropsync_neural::NeuralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl EvalError {
    pub fn config(field: &'static str, reason: impl Into<String>) -> Self {
        EvalError::Config { field, reason: reason.into() }
    }
}
