//! Multi-seed training with periodic greedy evaluation on both variants.
//!
//! Run directory layout: `config.txt`, `returns.csv`, `summary.csv`, and per
//! seed `seed_<k>/checkpoint_<step>.bin`. `returns.csv` is written last, so
//! a directory holding a matching `config.txt` and a complete `returns.csv`
//! is a finished run and can be reused.
//!
//! PPO trains in whole rollouts, so evaluations and checkpoints labelled
//! with step `s` use the parameters after the first rollout boundary at or
//! past `s`.

use std::path::{Path, PathBuf};

use confound_agents::{evaluate, train_dqn, train_ppo, DqnAgent, PpoAgent, StackedEnv, STACK_FRAMES};
use confound_core::envs::{self, EnvVariant};
use confound_nn::{checkpoint, Mlp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Algo, ExperimentConfig};
use crate::error::{io_err, LabError, Result};
use crate::records::{aggregate, read_returns, returns_csv, summary_csv, EvalRecord, SummaryRow};

/// Offset between a training seed and the seed of its evaluation episodes.
const EVAL_SEED_OFFSET: u64 = 1_000_000;

pub fn seed_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join(format!("seed_{seed}"))
}

pub fn checkpoint_path(run_dir: &Path, seed: u64, step: usize) -> PathBuf {
    seed_dir(run_dir, seed).join(format!("checkpoint_{step}.bin"))
}

/// Finished run: its directory, per-seed records and seed-mean summary.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub records: Vec<EvalRecord>,
    pub summary: Vec<SummaryRow>,
    /// The run was loaded from an existing directory.
    pub reused: bool,
}

struct Evaluator {
    train: confound_core::fpomdp::FactoredPomdp,
    eval: confound_core::fpomdp::FactoredPomdp,
    episodes: usize,
    seed: u64,
    records: Vec<EvalRecord>,
}

impl Evaluator {
    fn record<F>(&mut self, step: usize, mut act: F) -> Result<()>
    where
        F: FnMut(&[f64]) -> confound_agents::Result<confound_core::fpomdp::ActionId>,
    {
        let eval_seed = self.seed + EVAL_SEED_OFFSET;
        for (variant, env) in [(EnvVariant::Train, &self.train), (EnvVariant::Eval, &self.eval)] {
            let mean_return = evaluate(env, STACK_FRAMES, self.episodes, eval_seed, &mut act)?;
            self.records.push(EvalRecord { step, variant, seed: self.seed, mean_return });
        }
        Ok(())
    }
}

fn save(net: &Mlp, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    checkpoint::save(net, path)?;
    Ok(())
}

/// Trains one seed and returns its evaluation records. Checkpoints go under
/// `run_dir` when one is given.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, run_dir: Option<&Path>) -> Result<Vec<EvalRecord>> {
    let base = envs::build(cfg.env, EnvVariant::Train);
    let train_env = envs::wrap_random_override(&base, cfg.random_override)?;
    let mut ev = Evaluator {
        train: base,
        eval: envs::build(cfg.env, EnvVariant::Eval),
        episodes: cfg.eval_episodes,
        seed,
        records: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runner = StackedEnv::standard(train_env, seed)?;
    let na = runner.num_actions();
    let total = cfg.total_steps;
    let interval = cfg.eval_interval;
    let mut pending_ckpt: Vec<usize> = cfg.checkpoints.clone();
    pending_ckpt.sort_unstable();
    pending_ckpt.dedup();
    let mut next_eval = interval;
    let mut hook_err: Option<LabError> = None;

    // Handles evaluations and checkpoints due by `step`.
    let mut due = |step: usize, net: &Mlp, ev: &mut Evaluator, act: &mut dyn FnMut(&[f64]) -> confound_agents::Result<confound_core::fpomdp::ActionId>| -> Result<()> {
        while let Some(&c) = pending_ckpt.first() {
            if c > step {
                break;
            }
            if let Some(dir) = run_dir {
                save(net, &checkpoint_path(dir, seed, c))?;
            }
            pending_ckpt.remove(0);
        }
        while next_eval <= step.min(total) {
            ev.record(next_eval, &mut *act)?;
            next_eval += interval;
        }
        Ok(())
    };

    match cfg.algo {
        Algo::Dqn => {
            let mut agent = DqnAgent::new(cfg.dqn_config(), runner.obs_len(), na, &mut rng)?;
            train_dqn(&mut agent, &mut runner, total, &mut rng, |step, a| {
                if let Err(e) = due(step, a.online(), &mut ev, &mut |o| a.greedy(o)) {
                    hook_err = Some(e);
                    return Err(confound_agents::AgentError::Config("run hook failed".into()));
                }
                Ok(())
            })
            .map_err(|e| hook_err.take().unwrap_or(e.into()))?;
        }
        Algo::Ppo => {
            let mut agent = PpoAgent::new(cfg.ppo.clone(), runner.obs_len(), na, &mut rng)?;
            train_ppo(&mut agent, &mut runner, total, &mut rng, |step, a| {
                if let Err(e) = due(step, a.net(), &mut ev, &mut |o| a.greedy(o)) {
                    hook_err = Some(e);
                    return Err(confound_agents::AgentError::Config("run hook failed".into()));
                }
                Ok(())
            })
            .map_err(|e| hook_err.take().unwrap_or(e.into()))?;
        }
    }
    Ok(ev.records)
}

fn expected_rows(cfg: &ExperimentConfig) -> usize {
    cfg.seeds.len() * (cfg.total_steps / cfg.eval_interval) * 2
}

fn try_reuse(cfg: &ExperimentConfig, dir: &Path) -> Option<Vec<EvalRecord>> {
    let text = std::fs::read_to_string(dir.join("config.txt")).ok()?;
    let old = ExperimentConfig::parse(&text).ok()?;
    if !old.same_run(cfg) {
        return None;
    }
    let records = read_returns(&dir.join("returns.csv")).ok()?;
    if records.len() != expected_rows(cfg) {
        return None;
    }
    let all_ckpts = cfg.seeds.iter().all(|&s| cfg.checkpoints.iter().all(|&c| checkpoint_path(dir, s, c).exists()));
    all_ckpts.then_some(records)
}

/// Runs every seed of `cfg` on `jobs` worker threads and writes the run
/// directory. With `reuse`, a finished run of the same config is loaded
/// instead of retrained.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize, reuse: bool) -> Result<RunOutput> {
    cfg.validate()?;
    let dir = cfg.out_dir.clone();
    let summarize = |records: &[EvalRecord]| {
        aggregate(records).map_err(|msg| LabError::Csv { path: dir.join("returns.csv").display().to_string(), msg })
    };
    if reuse {
        if let Some(records) = try_reuse(cfg, &dir) {
            let summary = summarize(&records)?;
            return Ok(RunOutput { dir: dir.clone(), records, summary, reused: true });
        }
    }
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let _ = std::fs::remove_file(dir.join("returns.csv"));
    let cfg_path = dir.join("config.txt");
    std::fs::write(&cfg_path, cfg.to_text()).map_err(io_err(&cfg_path))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| LabError::Usage(format!("thread pool: {e}")))?;
    let per_seed: Vec<Result<Vec<EvalRecord>>> =
        pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, s, Some(&dir))).collect());
    let mut records = Vec::with_capacity(expected_rows(cfg));
    for r in per_seed {
        records.extend(r?);
    }
    let summary = summarize(&records)?;
    let sum_path = dir.join("summary.csv");
    std::fs::write(&sum_path, summary_csv(&summary)).map_err(io_err(&sum_path))?;
    let ret_path = dir.join("returns.csv");
    std::fs::write(&ret_path, returns_csv(&records)).map_err(io_err(&ret_path))?;
    Ok(RunOutput { dir, records, summary, reused: false })
}
