//! Exact factored-POMDP core, the gridworld environments, and the
//! history-representation checks built on exhaustive history enumeration.

pub mod envs;
pub mod error;
pub mod fpomdp;
pub mod repr;

pub use error::{CoreError, Result};
