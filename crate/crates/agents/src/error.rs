use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Core(#[from] confound_core::CoreError),
    #[error(transparent)]
    Nn(#[from] confound_nn::NnError),
    #[error("observation width {got} does not match {expected}")]
    Width { expected: usize, got: usize },
    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, AgentError>;
