use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("impossible observation: history has zero probability ({0})")]
    ImpossibleObservation(String),
    #[error("state space too large: more than {cap} histories")]
    StateSpaceTooLarge { cap: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
    #[error("undefined timestep {t} (representation covers {len} timesteps)")]
    UndefinedTimestep { t: usize, len: usize },
    #[error("cannot parse representation spec: {0}")]
    RepSpec(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
