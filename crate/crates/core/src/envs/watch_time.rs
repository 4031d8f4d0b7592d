//! Watch-the-Time gridworld.
//!
//! Three rows by five columns; start at `(0, 0)`, goal at `(2, 0)`. The
//! middle row except its last cell is a yellow band costing −0.1 on entry,
//! so the penalty-free route goes around it: right ×4, down ×2, left ×4.
//! The observation is the agent's location and the current timestep.

use super::{det, Cell, EnvVariant, GridSpec};
use crate::fpomdp::{ActionId, FactoredPomdp, ObservationVector, StateVector};

pub const ROWS: u8 = 3;
pub const COLS: u8 = 5;
pub const START: (u8, u8) = (0, 0);
pub const GOAL: (u8, u8) = (2, 0);
pub const HORIZON: usize = 14;

pub const LOCATION: usize = 0;
pub const TIME: usize = 1;

pub const UP: ActionId = ActionId(0);
pub const DOWN: ActionId = ActionId(1);
pub const LEFT: ActionId = ActionId(2);
pub const RIGHT: ActionId = ActionId(3);

pub fn is_yellow(r: u8, c: u8) -> bool {
    r == 1 && c < COLS - 1
}

pub fn cell_id(r: u8, c: u8) -> u8 {
    r * COLS + c
}

pub fn cell_of(id: u8) -> (u8, u8) {
    (id / COLS, id % COLS)
}

pub fn build(_variant: EnvVariant) -> FactoredPomdp {
    let goal = cell_id(GOAL.0, GOAL.1);
    FactoredPomdp::builder("watch-time", "train")
        .variable("x", ROWS * COLS)
        .variable("t", HORIZON as u8 + 1)
        .actions(&["up", "down", "left", "right"])
        .initial(vec![(StateVector(vec![cell_id(START.0, START.1), 0]), 1.0)])
        .horizon(HORIZON)
        .build(
            move |s, a| {
                let (r, c) = cell_of(s.get(LOCATION));
                let (nr, nc) = match a {
                    UP => (r.saturating_sub(1), c),
                    DOWN => ((r + 1).min(ROWS - 1), c),
                    LEFT => (r, c.saturating_sub(1)),
                    _ => (r, (c + 1).min(COLS - 1)),
                };
                let n = cell_id(nr, nc);
                let reward = if n == goal {
                    1.0
                } else if is_yellow(nr, nc) {
                    -0.1
                } else {
                    0.0
                };
                let t = (s.get(TIME) + 1).min(HORIZON as u8);
                det(StateVector(vec![n, t]), reward)
            },
            |s| ObservationVector::project(s, &[LOCATION, TIME]),
            move |s| s.get(LOCATION) == goal,
        )
        .expect("watch-the-time is well formed")
}

pub fn grid() -> GridSpec {
    let mut g = GridSpec::new(ROWS as usize, COLS as usize);
    for r in 0..ROWS {
        for c in 0..COLS {
            let kind = if is_yellow(r, c) { Cell::Penalty } else { Cell::Open };
            g.set(r as usize, c as usize, kind);
        }
    }
    g.set(START.0 as usize, START.1 as usize, Cell::Start);
    g.set(GOAL.0 as usize, GOAL.1 as usize, Cell::Goal);
    g
}

pub fn optimal_plan() -> Vec<ActionId> {
    let mut p = vec![RIGHT; 4];
    p.extend([DOWN; 2]);
    p.extend([LEFT; 4]);
    p
}
