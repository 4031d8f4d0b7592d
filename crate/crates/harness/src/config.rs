//! Experiment configuration and its flat `key = value` text form.
//!
//! Every key has a default, so an empty file is a valid config (PPO on the
//! Frozen T-Maze, 10 seeds, 100K steps). `to_text` writes every key and
//! `parse` of that text gives the same config back.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use confound_agents::{DqnConfig, PpoConfig};
use confound_core::envs::EnvName;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Dqn,
    Ppo,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Dqn => "dqn",
            Algo::Ppo => "ppo",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dqn" => Ok(Algo::Dqn),
            "ppo" => Ok(Algo::Ppo),
            other => Err(format!("unknown algorithm `{other}` (dqn|ppo)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    /// Training uses the train variant, evaluation both variants.
    pub env: EnvName,
    pub algo: Algo,
    pub total_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    /// Steps at which network checkpoints are written.
    pub checkpoints: Vec<usize>,
    /// Probability that a training action is replaced by a uniform one.
    pub random_override: f64,
    pub out_dir: PathBuf,
    pub dqn: DqnConfig,
    pub ppo: PpoConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            env: EnvName::FrozenTMaze,
            algo: Algo::Ppo,
            total_steps: 100_000,
            eval_interval: 2_000,
            eval_episodes: 20,
            seeds: (0..10).collect(),
            checkpoints: vec![0, 10_000, 30_000, 100_000],
            random_override: 0.0,
            out_dir: PathBuf::from("runs/experiment"),
            dqn: DqnConfig::default(),
            ppo: PpoConfig::default(),
        }
    }
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| x.trim().parse::<T>().map_err(|_| format!("bad list item `{}`", x.trim()))).collect()
}

fn parse_seeds(v: &str) -> std::result::Result<Vec<u64>, String> {
    if let Some((a, b)) = v.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range `{v}`"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range `{v}`"))?;
        return Ok((a..b).collect());
    }
    parse_list(v)
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("bad number `{v}`"))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| LabError::Parse { line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            cfg.set(k.trim(), v.trim()).map_err(|m| err(format!("{}: {m}", k.trim())))?;
        }
        Ok(cfg)
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "name" => self.name = v.to_string(),
            "env" => self.env = v.parse().map_err(|e: confound_core::CoreError| e.to_string())?,
            "algo" => self.algo = v.parse()?,
            "total_steps" => self.total_steps = num(v)?,
            "eval_interval" => self.eval_interval = num(v)?,
            "eval_episodes" => self.eval_episodes = num(v)?,
            "seeds" => self.seeds = parse_seeds(v)?,
            "checkpoints" => self.checkpoints = parse_list(v)?,
            "random_override" => self.random_override = num(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "dqn.buffer_size" => self.dqn.buffer_size = num(v)?,
            "dqn.learning_starts" => self.dqn.learning_starts = num(v)?,
            "dqn.batch_size" => self.dqn.batch_size = num(v)?,
            "dqn.train_freq" => self.dqn.train_freq = num(v)?,
            "dqn.target_update_interval" => self.dqn.target_update_interval = num(v)?,
            "dqn.gamma" => self.dqn.gamma = num(v)?,
            "dqn.learning_rate" => self.dqn.learning_rate = num(v)?,
            "dqn.exploration_fraction" => self.dqn.exploration_fraction = num(v)?,
            "dqn.eps_start" => self.dqn.eps_start = num(v)?,
            "dqn.eps_end" => self.dqn.eps_end = num(v)?,
            "dqn.hidden" => self.dqn.hidden = parse_list(v)?,
            "dqn.max_grad_norm" => self.dqn.max_grad_norm = num(v)?,
            "dqn.huber_delta" => self.dqn.huber_delta = num(v)?,
            "ppo.n_steps" => self.ppo.n_steps = num(v)?,
            "ppo.epochs" => self.ppo.epochs = num(v)?,
            "ppo.minibatch_size" => self.ppo.minibatch_size = num(v)?,
            "ppo.clip_range" => self.ppo.clip_range = num(v)?,
            "ppo.ent_coef" => self.ppo.ent_coef = num(v)?,
            "ppo.vf_coef" => self.ppo.vf_coef = num(v)?,
            "ppo.gamma" => self.ppo.gamma = num(v)?,
            "ppo.gae_lambda" => self.ppo.gae_lambda = num(v)?,
            "ppo.learning_rate" => self.ppo.learning_rate = num(v)?,
            "ppo.max_grad_norm" => self.ppo.max_grad_norm = num(v)?,
            "ppo.hidden" => self.ppo.hidden = parse_list(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let d = &self.dqn;
        let p = &self.ppo;
        let lines = [
            ("name", self.name.clone()),
            ("env", self.env.to_string()),
            ("algo", self.algo.to_string()),
            ("total_steps", self.total_steps.to_string()),
            ("eval_interval", self.eval_interval.to_string()),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("seeds", join(&self.seeds)),
            ("checkpoints", join(&self.checkpoints)),
            ("random_override", self.random_override.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("dqn.buffer_size", d.buffer_size.to_string()),
            ("dqn.learning_starts", d.learning_starts.to_string()),
            ("dqn.batch_size", d.batch_size.to_string()),
            ("dqn.train_freq", d.train_freq.to_string()),
            ("dqn.target_update_interval", d.target_update_interval.to_string()),
            ("dqn.gamma", d.gamma.to_string()),
            ("dqn.learning_rate", d.learning_rate.to_string()),
            ("dqn.exploration_fraction", d.exploration_fraction.to_string()),
            ("dqn.eps_start", d.eps_start.to_string()),
            ("dqn.eps_end", d.eps_end.to_string()),
            ("dqn.hidden", join(&d.hidden)),
            ("dqn.max_grad_norm", d.max_grad_norm.to_string()),
            ("dqn.huber_delta", d.huber_delta.to_string()),
            ("ppo.n_steps", p.n_steps.to_string()),
            ("ppo.epochs", p.epochs.to_string()),
            ("ppo.minibatch_size", p.minibatch_size.to_string()),
            ("ppo.clip_range", p.clip_range.to_string()),
            ("ppo.ent_coef", p.ent_coef.to_string()),
            ("ppo.vf_coef", p.vf_coef.to_string()),
            ("ppo.gamma", p.gamma.to_string()),
            ("ppo.gae_lambda", p.gae_lambda.to_string()),
            ("ppo.learning_rate", p.learning_rate.to_string()),
            ("ppo.max_grad_norm", p.max_grad_norm.to_string()),
            ("ppo.hidden", join(&p.hidden)),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// DQN settings with the schedule stretched over this run's length.
    pub fn dqn_config(&self) -> DqnConfig {
        DqnConfig { total_steps: self.total_steps, ..self.dqn.clone() }
    }

    /// Collects every problem, each prefixed with its key.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.seeds.is_empty() {
            errs.push("seeds: must not be empty".to_string());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            errs.push("seeds: duplicates".into());
        }
        if self.total_steps == 0 {
            errs.push("total_steps: must be positive".into());
        }
        if self.eval_interval == 0 || !self.total_steps.is_multiple_of(self.eval_interval.max(1)) {
            errs.push(format!("eval_interval: {} does not divide total_steps {}", self.eval_interval, self.total_steps));
        }
        if self.eval_episodes == 0 {
            errs.push("eval_episodes: must be positive".into());
        }
        if let Some(c) = self.checkpoints.iter().find(|&&c| c > self.total_steps) {
            errs.push(format!("checkpoints: {c} is past total_steps"));
        }
        if !(0.0..=1.0).contains(&self.random_override) {
            errs.push(format!("random_override: {} outside [0, 1]", self.random_override));
        }
        if !self.env.has_eval_variant() {
            errs.push(format!("env: {} has no eval variant", self.env));
        }
        if let Err(e) = self.dqn_config().validate() {
            errs.push(format!("dqn: {e}"));
        }
        if let Err(e) = self.ppo.validate() {
            errs.push(format!("ppo: {e}"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(LabError::Invalid(errs))
        }
    }

    /// Equal up to the output directory.
    pub fn same_run(&self, other: &ExperimentConfig) -> bool {
        ExperimentConfig { out_dir: PathBuf::new(), ..self.clone() }
            == ExperimentConfig { out_dir: PathBuf::new(), ..other.clone() }
    }
}
