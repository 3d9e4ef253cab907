use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Failures sorted by exit code: 1 for usage and configuration problems,
/// 2 for everything that goes wrong while running.
#[derive(Debug, Error)]
pub enum CliError {
    /// `--help` or `--version` output; not a failure.
    #[error("{0}")]
    Help(String),
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Help(_) => 0,
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

impl From<dropsync_core::Error> for CliError {
    fn from(e: dropsync_core::Error) -> Self {
        match e {
            dropsync_core::Error::InvalidConfig { .. } => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<dropsync_neural::NeuralError> for CliError {
    fn from(e: dropsync_neural::NeuralError) -> Self {
        use dropsync_neural::NeuralError as N;
        match e {
            N::InvalidConfig { .. } => CliError::Config(e.to_string()),
            N::Core(c) => c.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<dropsync_eval::EvalError> for CliError {
    fn from(e: dropsync_eval::EvalError) -> Self {
        use dropsync_eval::EvalError as E;
        match e {
            E::Config { .. } => CliError::Config(e.to_string()),
            E::Core(c) => c.into(),
            E::Neural(n) => n.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
