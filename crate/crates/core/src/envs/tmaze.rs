//! Frozen T-Maze.
//!
//! Three rows by eight columns. The start cell sits between the two
//! corridors at `(1, 0)`; a single connector cell `(1, 3)` joins them in
//! the middle. The green goal is at the top-right end, the purple goal at
//! the bottom-right end. In the eval variant the top corridor cell of
//! column 3 is frozen: entering it with a horizontal move slides the agent
//! to the bottom corridor, the same as moving down twice. The bottom cell
//! is not frozen: a bottom-to-top slide would let a green-signal agent
//! reach its goal through the purple corridor in the train-optimal time.

use super::{det, Cell, EnvVariant, GridSpec};
use crate::fpomdp::{ActionId, FactoredPomdp, ObservationVector, StateVector};

pub const ROWS: usize = 3;
pub const COLS: usize = 8;
pub const START: (usize, usize) = (1, 0);
pub const GREEN_GOAL: (usize, usize) = (0, 7);
pub const PURPLE_GOAL: (usize, usize) = (2, 7);
pub const ICE: [(usize, usize); 1] = [(0, 3)];
pub const CONNECTOR: (usize, usize) = (1, 3);
pub const HORIZON: usize = 20;

/// Factor indices.
pub const SIGNAL: usize = 0;
pub const LOCATION: usize = 1;
pub const GOAL: usize = 2;

pub const UP: ActionId = ActionId(0);
pub const DOWN: ActionId = ActionId(1);
pub const LEFT: ActionId = ActionId(2);
pub const RIGHT: ActionId = ActionId(3);

fn is_open(r: usize, c: usize) -> bool {
    r < ROWS && c < COLS && (r != 1 || c == 0 || c == 3)
}

/// Open cells in row-major order; a cell's position is its location id.
pub fn cells() -> Vec<(usize, usize)> {
    (0..ROWS)
        .flat_map(|r| (0..COLS).map(move |c| (r, c)))
        .filter(|&(r, c)| is_open(r, c))
        .collect()
}

pub fn cell_id(cell: (usize, usize)) -> Option<u8> {
    cells().iter().position(|&x| x == cell).map(|i| i as u8)
}

pub fn cell_of(id: u8) -> (usize, usize) {
    cells()[id as usize]
}

pub fn num_cells() -> usize {
    cells().len()
}

fn moved(cell: (usize, usize), a: ActionId, variant: EnvVariant) -> (usize, usize) {
    let (r, c) = cell;
    let target = match a {
        UP => r.checked_sub(1).map(|r| (r, c)),
        DOWN => Some((r + 1, c)),
        LEFT => c.checked_sub(1).map(|c| (r, c)),
        _ => Some((r, c + 1)),
    };
    let Some((tr, tc)) = target.filter(|&(tr, tc)| is_open(tr, tc)) else {
        return cell;
    };
    let horizontal = a == LEFT || a == RIGHT;
    if variant == EnvVariant::Eval && horizontal && ICE.contains(&(tr, tc)) {
        return (2 - tr, tc);
    }
    (tr, tc)
}

pub fn build(variant: EnvVariant) -> FactoredPomdp {
    let n = num_cells() as u8;
    let start = cell_id(START).expect("start is open");
    let green = cell_id(GREEN_GOAL).expect("goal is open");
    let purple = cell_id(PURPLE_GOAL).expect("goal is open");
    FactoredPomdp::builder("frozen-tmaze", variant.as_str())
        .variable("x1", 3)
        .variable("x2", n)
        .variable("y", 2)
        .actions(&["up", "down", "left", "right"])
        .initial(vec![
            (StateVector(vec![1, start, 0]), 0.5),
            (StateVector(vec![2, start, 1]), 0.5),
        ])
        .horizon(HORIZON)
        .build(
            move |s, a| {
                let loc = cell_of(s.get(LOCATION));
                let next = cell_id(moved(loc, a, variant)).expect("moves stay on open cells");
                let y = s.get(GOAL);
                let reward = if next == green {
                    if y == 0 { 1.0 } else { -1.0 }
                } else if next == purple {
                    if y == 1 { 1.0 } else { -1.0 }
                } else {
                    -0.1
                };
                det(StateVector(vec![0, next, y]), reward)
            },
            |s| ObservationVector::project(s, &[SIGNAL, LOCATION]),
            move |s| {
                let l = s.get(LOCATION);
                l == green || l == purple
            },
        )
        .expect("frozen T-maze is well formed")
}

pub fn grid(variant: EnvVariant) -> GridSpec {
    let mut g = GridSpec::new(ROWS, COLS);
    for (r, c) in cells() {
        g.set(r, c, Cell::Open);
    }
    g.set(START.0, START.1, Cell::Start);
    g.set(GREEN_GOAL.0, GREEN_GOAL.1, Cell::Goal);
    g.set(PURPLE_GOAL.0, PURPLE_GOAL.1, Cell::Goal);
    if variant == EnvVariant::Eval {
        for (r, c) in ICE {
            g.set(r, c, Cell::Ice);
        }
    }
    g
}

/// Optimal open-loop plans for each signal: `(green plan, purple plan)`.
pub fn optimal_plans(variant: EnvVariant) -> (Vec<ActionId>, Vec<ActionId>) {
    match variant {
        EnvVariant::Train => {
            let mut g = vec![UP];
            g.extend([RIGHT; 7]);
            let mut p = vec![DOWN];
            p.extend([RIGHT; 7]);
            (g, p)
        }
        EnvVariant::Eval => {
            let mut g = vec![UP, RIGHT, RIGHT, RIGHT, UP, UP];
            g.extend([RIGHT; 4]);
            let mut p = vec![DOWN];
            p.extend([RIGHT; 7]);
            (g, p)
        }
    }
}
