//! Experiment harness: config-driven multi-seed training runs, CSV logs and
//! their aggregation, figure presets, the T-Maze signal probe, and the
//! command implementations behind the `confound-lab` binary.

pub mod cli;
pub mod config;
pub mod error;
pub mod presets;
pub mod probe;
pub mod records;
pub mod runner;

pub use config::{Algo, ExperimentConfig};
pub use error::{LabError, Result};
pub use presets::{figure_configs, reproduce, Setting};
pub use probe::{kl_probe, kl_probe_path, Direction, ProbeGrid};
pub use records::{aggregate, aggregate_dir, EvalRecord, SummaryRow};
pub use runner::{run_experiment, run_seed, RunOutput};
