//! Dense ReLU networks in 64-bit floats: batched forward and reverse-mode
//! passes, Adam, the losses used by DQN and PPO, categorical divergences,
//! and a binary checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod mlp;

pub use adam::Adam;
pub use error::{NnError, Result};
pub use mlp::{Activations, Head, Mlp};
