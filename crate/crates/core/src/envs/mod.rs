//! The four gridworlds, their train/eval variants, the random-action
//! override wrapper, scripted optimal policies and the fixed-width numeric
//! observation encodings used by the agents.

pub mod diversion;
pub mod key2door;
pub mod tmaze;
pub mod watch_time;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::fpomdp::{ActionId, FactoredPomdp, ObservationVector, Outcome, PlanPolicy, Policy, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnvVariant {
    Train,
    Eval,
}

impl EnvVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvVariant::Train => "train",
            EnvVariant::Eval => "eval",
        }
    }
}

impl fmt::Display for EnvVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvVariant {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(EnvVariant::Train),
            "eval" => Ok(EnvVariant::Eval),
            other => Err(CoreError::UnknownEnv(format!("variant {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnvName {
    FrozenTMaze,
    Key2Door,
    Diversion,
    WatchTime,
}

impl EnvName {
    pub const ALL: [EnvName; 4] =
        [EnvName::FrozenTMaze, EnvName::Key2Door, EnvName::Diversion, EnvName::WatchTime];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::FrozenTMaze => "frozen-tmaze",
            EnvName::Key2Door => "key2door",
            EnvName::Diversion => "diversion",
            EnvName::WatchTime => "watch-time",
        }
    }

    /// Name of a (possibly wrapped) environment value.
    pub fn of(env: &FactoredPomdp) -> Result<EnvName> {
        env.name().parse()
    }

    pub fn has_eval_variant(self) -> bool {
        self != EnvName::WatchTime
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvName {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        EnvName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| CoreError::UnknownEnv(s.to_string()))
    }
}

pub(crate) fn det(next: StateVector, reward: f64) -> Vec<Outcome> {
    vec![Outcome { next, prob: 1.0, reward }]
}

pub fn frozen_tmaze(variant: EnvVariant) -> FactoredPomdp {
    tmaze::build(variant)
}

pub fn key2door(variant: EnvVariant) -> FactoredPomdp {
    key2door::build(variant)
}

pub fn diversion(variant: EnvVariant) -> FactoredPomdp {
    diversion::build(variant)
}

/// Watch-the-Time has a single layout; both variants build it.
pub fn watch_time(variant: EnvVariant) -> FactoredPomdp {
    watch_time::build(variant)
}

pub fn build(name: EnvName, variant: EnvVariant) -> FactoredPomdp {
    match name {
        EnvName::FrozenTMaze => frozen_tmaze(variant),
        EnvName::Key2Door => key2door(variant),
        EnvName::Diversion => diversion(variant),
        EnvName::WatchTime => watch_time(variant),
    }
}

/// With probability `p` the chosen action is replaced by one drawn
/// uniformly from all actions (possibly the same one).
pub fn wrap_random_override(env: &FactoredPomdp, p: f64) -> Result<FactoredPomdp> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CoreError::Contract(format!("override probability {p} outside [0, 1]")));
    }
    if p == 0.0 {
        return Ok(env.clone());
    }
    let inner = env.clone();
    let na = env.num_actions();
    let dynamics = move |s: &StateVector, a: ActionId| -> Vec<Outcome> {
        let mut out: Vec<Outcome> = inner
            .outcomes(s, a)
            .into_iter()
            .map(|o| Outcome { prob: o.prob * (1.0 - p), ..o })
            .collect();
        for b in 0..na {
            out.extend(
                inner
                    .outcomes(s, ActionId(b))
                    .into_iter()
                    .map(|o| Outcome { prob: o.prob * p / na as f64, ..o }),
            );
        }
        out
    };
    let variant = format!("{}+override{p}", env.variant());
    Ok(env.with_dynamics(variant, Arc::new(dynamics)))
}

/// Open-loop optimal policy of a variant. T-Maze selects its plan from the
/// signal in the first observation.
pub fn scripted_optimal_policy(name: EnvName, variant: EnvVariant) -> Result<Arc<dyn Policy>> {
    let policy = match name {
        EnvName::FrozenTMaze => {
            let env = frozen_tmaze(variant);
            let (green, purple) = tmaze::optimal_plans(variant);
            let mut pi = PlanPolicy::new(4, green.clone());
            for (s, _) in env.initial() {
                let plan = if s.get(tmaze::GOAL) == 0 { green.clone() } else { purple.clone() };
                pi = pi.with_plan(env.observe(s), plan);
            }
            pi
        }
        EnvName::Key2Door => PlanPolicy::new(2, key2door::optimal_plan(variant)),
        EnvName::Diversion => PlanPolicy::new(4, diversion::optimal_plan(variant)),
        EnvName::WatchTime => PlanPolicy::new(4, watch_time::optimal_plan()),
    };
    Ok(Arc::new(policy))
}

/// By-name lookup of [`scripted_optimal_policy`].
pub fn scripted_optimal_policy_named(name: &str, variant: EnvVariant) -> Result<Arc<dyn Policy>> {
    scripted_optimal_policy(name.parse()?, variant)
}

/// Width of the numeric observation vector fed to the agents.
pub fn observation_width(name: EnvName) -> usize {
    match name {
        EnvName::FrozenTMaze => 2 + tmaze::num_cells(),
        EnvName::Key2Door => key2door::CELLS as usize,
        EnvName::Diversion => diversion::COLS as usize + 1,
        EnvName::WatchTime => {
            (watch_time::ROWS * watch_time::COLS) as usize + watch_time::HORIZON + 1
        }
    }
}

/// Numeric encoding of one observation.
///
/// * frozen-tmaze: `[green, purple]` signal bits, then a one-hot location.
/// * key2door: one-hot location.
/// * diversion: one-hot column, then the row bit (1 = bottom).
/// * watch-time: one-hot location, then a one-hot timestep.
pub fn encode_observation(name: EnvName, obs: &ObservationVector) -> Vec<f64> {
    let mut v = vec![0.0; observation_width(name)];
    let val = |var: usize| obs.value(var).expect("observed factor") as usize;
    match name {
        EnvName::FrozenTMaze => {
            match val(tmaze::SIGNAL) {
                1 => v[0] = 1.0,
                2 => v[1] = 1.0,
                _ => {}
            }
            v[2 + val(tmaze::LOCATION)] = 1.0;
        }
        EnvName::Key2Door => v[val(key2door::LOCATION)] = 1.0,
        EnvName::Diversion => {
            v[val(diversion::COL)] = 1.0;
            v[diversion::COLS as usize] = val(diversion::ROW) as f64;
        }
        EnvName::WatchTime => {
            let cells = (watch_time::ROWS * watch_time::COLS) as usize;
            v[val(watch_time::LOCATION)] = 1.0;
            v[cells + val(watch_time::TIME)] = 1.0;
        }
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Open,
    Start,
    Goal,
    Ice,
    Key,
    Door,
    Penalty,
    Diversion,
}

impl Cell {
    fn glyph(self) -> char {
        match self {
            Cell::Wall => '#',
            Cell::Open => '.',
            Cell::Start => 'S',
            Cell::Goal => 'G',
            Cell::Ice => '*',
            Cell::Key => 'K',
            Cell::Door => 'D',
            Cell::Penalty => 'y',
            Cell::Diversion => 'v',
        }
    }
}

/// Cell annotations of a gridworld, row 0 first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub height: usize,
    pub width: usize,
    pub cells: Vec<Cell>,
}

impl GridSpec {
    pub fn new(height: usize, width: usize) -> Self {
        GridSpec { height, width, cells: vec![Cell::Wall; height * width] }
    }

    pub fn set(&mut self, r: usize, c: usize, cell: Cell) {
        self.cells[r * self.width + c] = cell;
    }

    pub fn get(&self, r: usize, c: usize) -> Cell {
        self.cells[r * self.width + c]
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in 0..self.height {
            for c in 0..self.width {
                s.push(self.get(r, c).glyph());
            }
            s.push('\n');
        }
        s
    }
}

pub fn grid_spec(name: EnvName, variant: EnvVariant) -> GridSpec {
    match name {
        EnvName::FrozenTMaze => tmaze::grid(variant),
        EnvName::Key2Door => key2door::grid(variant),
        EnvName::Diversion => diversion::grid(variant),
        EnvName::WatchTime => watch_time::grid(),
    }
}
