//! Preset experiment matrices, one per reproduced figure.

use std::path::Path;

use confound_core::envs::EnvName;

use crate::config::{Algo, ExperimentConfig};
use crate::error::{LabError, Result};
use crate::probe::{kl_probe_path, write_probe, Direction};
use crate::runner::{checkpoint_path, run_experiment, seed_dir, RunOutput};

pub const FIGURES: [&str; 7] = ["fig1", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9"];

/// One training condition of the figure matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    Ppo,
    /// PPO trained with 20% of actions replaced by uniform ones.
    PpoOverride,
    /// DQN with a 100K replay buffer.
    DqnLarge,
    /// DQN with a 10K replay buffer.
    DqnSmall,
    /// 10K buffer and final ε = 0.1.
    DqnSmallEps,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Ppo => "ppo",
            Setting::PpoOverride => "ppo-override",
            Setting::DqnLarge => "dqn-100k",
            Setting::DqnSmall => "dqn-10k",
            Setting::DqnSmallEps => "dqn-10k-eps",
        }
    }

    /// Config of this setting on `env`, writing to `out_dir`.
    pub fn config(self, env: EnvName, out_dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            name: format!("{env}-{}", self.as_str()),
            env,
            out_dir: out_dir.to_path_buf(),
            ..ExperimentConfig::default()
        };
        match self {
            Setting::Ppo => cfg.algo = Algo::Ppo,
            Setting::PpoOverride => {
                cfg.algo = Algo::Ppo;
                cfg.random_override = 0.2;
            }
            Setting::DqnLarge => cfg.algo = Algo::Dqn,
            Setting::DqnSmall => {
                cfg.algo = Algo::Dqn;
                cfg.dqn.buffer_size = 10_000;
            }
            Setting::DqnSmallEps => {
                cfg.algo = Algo::Dqn;
                cfg.dqn.buffer_size = 10_000;
                cfg.dqn.eps_end = 0.1;
            }
        }
        cfg
    }
}

const EXPLORATION: [Setting; 4] = [Setting::DqnLarge, Setting::DqnSmall, Setting::DqnSmallEps, Setting::PpoOverride];

/// The (environment, setting) pairs of a figure.
pub fn figure_matrix(figure: &str) -> Result<Vec<(EnvName, Setting)>> {
    let m = match figure {
        "fig1" | "fig6" | "fig7" => vec![(EnvName::FrozenTMaze, Setting::Ppo)],
        "fig4" => [EnvName::FrozenTMaze, EnvName::Key2Door, EnvName::Diversion]
            .into_iter()
            .flat_map(|e| [(e, Setting::Ppo), (e, Setting::DqnLarge)])
            .collect(),
        "fig5" => EXPLORATION.iter().map(|&s| (EnvName::FrozenTMaze, s)).collect(),
        "fig8" => EXPLORATION.iter().map(|&s| (EnvName::Key2Door, s)).collect(),
        "fig9" => EXPLORATION.iter().map(|&s| (EnvName::Diversion, s)).collect(),
        other => return Err(LabError::UnknownFigure(other.to_string())),
    };
    Ok(m)
}

/// Configs of a figure, each writing to `out/<figure>/<env>-<setting>`.
pub fn figure_configs(figure: &str, out: &Path) -> Result<Vec<ExperimentConfig>> {
    Ok(figure_matrix(figure)?
        .into_iter()
        .map(|(env, s)| s.config(env, &out.join(figure).join(format!("{env}-{}", s.as_str()))))
        .collect())
}

pub fn probe_direction(figure: &str) -> Option<Direction> {
    match figure {
        "fig6" => Some(Direction::GreenToPurple),
        "fig7" => Some(Direction::PurpleToGreen),
        _ => None,
    }
}

/// Probes every checkpoint of every seed, writing
/// `seed_<k>/probe_<step>_<direction>.csv`.
pub fn probe_run(cfg: &ExperimentConfig, direction: Direction) -> Result<()> {
    for &seed in &cfg.seeds {
        for &step in &cfg.checkpoints {
            let grid = kl_probe_path(&checkpoint_path(&cfg.out_dir, seed, step), cfg.env, step, direction)?;
            let path = seed_dir(&cfg.out_dir, seed).join(format!("probe_{step}_{direction}.csv"));
            write_probe(&grid, &path)?;
        }
    }
    Ok(())
}

/// Runs a figure's matrix; probe figures also write their probe grids.
pub fn reproduce(figure: &str, out: &Path, jobs: usize, reuse: bool) -> Result<Vec<RunOutput>> {
    let mut outs = Vec::new();
    for cfg in figure_configs(figure, out)? {
        let run = run_experiment(&cfg, jobs, reuse)?;
        if let Some(d) = probe_direction(figure) {
            probe_run(&cfg, d)?;
        }
        outs.push(run);
    }
    Ok(outs)
}
