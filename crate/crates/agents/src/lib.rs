//! DQN and PPO agents over stacked numeric observations of the gridworlds.

pub mod dqn;
pub mod env;
pub mod error;
pub mod ppo;
pub mod replay;
pub mod schedule;
pub mod stack;

pub use dqn::{train_dqn, DqnAgent, DqnConfig};
pub use env::{evaluate, Encoder, EnvStep, StackedEnv, STACK_FRAMES};
pub use error::{AgentError, Result};
pub use ppo::{train_ppo, PpoAgent, PpoConfig, PpoStats, Rollout};
pub use replay::{ReplayBuffer, SparseObs, Transition};
pub use schedule::EpsilonSchedule;
pub use stack::ObservationStack;
