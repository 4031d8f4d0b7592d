//! Signal-permutation probe of a T-Maze policy network.
//!
//! For each cell the greedy policy visits from reset, the stack captured on
//! first arrival is fed to the network next to a copy with the two signal
//! bits swapped in every frame, and the KL divergence between the two
//! action distributions is recorded. Cells the greedy rollout never reaches
//! stay empty; goal cells are left out because no action is taken there.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use confound_agents::{Encoder, ObservationStack, STACK_FRAMES};
use confound_core::envs::{self, tmaze, EnvName, EnvVariant};
use confound_core::fpomdp::{ActionId, StateVector};
use confound_nn::{checkpoint, loss, Mlp};

use crate::error::{io_err, LabError, Result};

pub const PROBE_HEADER: &str = "step,direction,row,col,kl";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Green-signal episodes, compared against the purple signal.
    GreenToPurple,
    PurpleToGreen,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::GreenToPurple => "g2p",
            Direction::PurpleToGreen => "p2g",
        }
    }

    /// Goal-variable value of the episodes this direction rolls out.
    fn goal(self) -> u8 {
        match self {
            Direction::GreenToPurple => 0,
            Direction::PurpleToGreen => 1,
        }
    }

    /// The cell next to this direction's goal where the corridor ends.
    pub fn junction(self) -> (usize, usize) {
        let (r, c) = match self {
            Direction::GreenToPurple => tmaze::GREEN_GOAL,
            Direction::PurpleToGreen => tmaze::PURPLE_GOAL,
        };
        (r, c - 1)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "g2p" => Ok(Direction::GreenToPurple),
            "p2g" => Ok(Direction::PurpleToGreen),
            other => Err(LabError::Usage(format!("unknown probe direction `{other}` (g2p|p2g)"))),
        }
    }
}

/// KL per maze cell, indexed `[row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrid {
    pub step: usize,
    pub direction: Direction,
    pub kl: Vec<Vec<Option<f64>>>,
}

impl ProbeGrid {
    pub fn get(&self, cell: (usize, usize)) -> Option<f64> {
        self.kl[cell.0][cell.1]
    }

    /// Cell with the largest KL; ties go to the first in row-major order.
    pub fn argmax(&self) -> Option<((usize, usize), f64)> {
        let mut best: Option<((usize, usize), f64)> = None;
        for (r, row) in self.kl.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                if let Some(v) = *v {
                    if best.is_none_or(|(_, b)| v > b) {
                        best = Some(((r, c), v));
                    }
                }
            }
        }
        best
    }

    pub fn max(&self) -> Option<f64> {
        self.argmax().map(|(_, v)| v)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{PROBE_HEADER}\n");
        for (r, row) in self.kl.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let v = v.map(|x| x.to_string()).unwrap_or_default();
                writeln!(s, "{},{},{r},{c},{v}", self.step, self.direction).expect("string write");
            }
        }
        s
    }
}

fn swap_signal(stack: &[f64], width: usize) -> Vec<f64> {
    let mut out = stack.to_vec();
    for frame in out.chunks_mut(width) {
        frame.swap(0, 1);
    }
    out
}

fn policy(net: &Mlp, na: usize, x: &[f64]) -> Result<Vec<f64>> {
    let out = net.predict(x)?;
    Ok(loss::softmax(&out[..na]))
}

/// Probes a PPO network (action logits followed by the value) at `step`.
pub fn kl_probe(net: &Mlp, step: usize, direction: Direction) -> Result<ProbeGrid> {
    let env = envs::frozen_tmaze(EnvVariant::Train);
    let na = env.num_actions();
    let enc = Encoder::for_env(&env);
    let width = enc.width();
    if net.input_size() != STACK_FRAMES * width || net.output_size() != na + 1 {
        return Err(LabError::Usage(format!(
            "probe expects a T-Maze policy network with {} inputs and {} outputs, got {} and {}",
            STACK_FRAMES * width,
            na + 1,
            net.input_size(),
            net.output_size()
        )));
    }
    let mut s: StateVector = env
        .initial()
        .iter()
        .map(|(s, _)| s.clone())
        .find(|s| s.get(tmaze::GOAL) == direction.goal())
        .ok_or_else(|| LabError::Usage("no initial state for the probe signal".into()))?;
    let mut stack = ObservationStack::new(STACK_FRAMES, width);
    stack.push(&enc.encode(&env.observe(&s))?)?;
    let mut kl = vec![vec![None; tmaze::COLS]; tmaze::ROWS];
    for _ in 0..env.horizon() {
        let (r, c) = tmaze::cell_of(s.get(tmaze::LOCATION));
        let p = policy(net, na, stack.as_slice())?;
        if kl[r][c].is_none() {
            let q = policy(net, na, &swap_signal(stack.as_slice(), width))?;
            kl[r][c] = Some(loss::kl_divergence(&p, &q)?);
        }
        let a = ActionId(confound_agents::dqn::argmax(&p));
        let next = env
            .outcomes(&s, a)
            .into_iter()
            .max_by(|x, y| x.prob.total_cmp(&y.prob))
            .expect("every action has an outcome")
            .next;
        s = next;
        if env.is_terminal(&s) {
            break;
        }
        stack.push(&enc.encode(&env.observe(&s))?)?;
    }
    Ok(ProbeGrid { step, direction, kl })
}

/// Loads a checkpoint and probes it; only the Frozen T-Maze is supported.
pub fn kl_probe_path(path: &Path, env: EnvName, step: usize, direction: Direction) -> Result<ProbeGrid> {
    if env != EnvName::FrozenTMaze {
        return Err(LabError::Usage(format!("probe supports frozen-tmaze only, got {env}")));
    }
    if !path.exists() {
        return Err(LabError::Io {
            path: path.display().to_string(),
            source: std::io::Error::from(std::io::ErrorKind::NotFound),
        });
    }
    let net = checkpoint::load(path)?;
    kl_probe(&net, step, direction)
}

pub fn write_probe(grid: &ProbeGrid, path: &Path) -> Result<()> {
    std::fs::write(path, grid.to_csv()).map_err(io_err(path))
}
