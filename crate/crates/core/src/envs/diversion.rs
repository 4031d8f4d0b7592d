//! Diversion gridworld: two rows by seven columns, fully observed.
//!
//! The agent starts top-left and the goal is top-right. In the eval variant
//! a sign on the top cell of the middle column diverts any rightward move
//! into it to the bottom row.

use super::{det, Cell, EnvVariant, GridSpec};
use crate::fpomdp::{ActionId, FactoredPomdp, ObservationVector, StateVector};

pub const ROWS: u8 = 2;
pub const COLS: u8 = 7;
pub const DIVERSION_COL: u8 = 3;
pub const HORIZON: usize = 15;

pub const ROW: usize = 0;
pub const COL: usize = 1;

pub const UP: ActionId = ActionId(0);
pub const DOWN: ActionId = ActionId(1);
pub const LEFT: ActionId = ActionId(2);
pub const RIGHT: ActionId = ActionId(3);

fn is_goal(r: u8, c: u8) -> bool {
    r == 0 && c == COLS - 1
}

pub fn build(variant: EnvVariant) -> FactoredPomdp {
    FactoredPomdp::builder("diversion", variant.as_str())
        .variable("x1", ROWS)
        .variable("x2", COLS)
        .actions(&["up", "down", "left", "right"])
        .initial(vec![(StateVector(vec![0, 0]), 1.0)])
        .horizon(HORIZON)
        .build(
            move |s, a| {
                let (r, c) = (s.get(ROW), s.get(COL));
                let (mut nr, nc) = match a {
                    UP => (r.saturating_sub(1), c),
                    DOWN => ((r + 1).min(ROWS - 1), c),
                    LEFT => (r, c.saturating_sub(1)),
                    _ => (r, (c + 1).min(COLS - 1)),
                };
                if variant == EnvVariant::Eval && a == RIGHT && nr == 0 && nc == DIVERSION_COL && c != nc {
                    nr = 1;
                }
                let reward = if is_goal(nr, nc) { 1.0 } else { -0.1 };
                det(StateVector(vec![nr, nc]), reward)
            },
            |s| ObservationVector::project(s, &[ROW, COL]),
            |s| is_goal(s.get(ROW), s.get(COL)),
        )
        .expect("diversion is well formed")
}

pub fn grid(variant: EnvVariant) -> GridSpec {
    let mut g = GridSpec::new(ROWS as usize, COLS as usize);
    for r in 0..ROWS as usize {
        for c in 0..COLS as usize {
            g.set(r, c, Cell::Open);
        }
    }
    g.set(0, 0, Cell::Start);
    g.set(0, COLS as usize - 1, Cell::Goal);
    if variant == EnvVariant::Eval {
        g.set(0, DIVERSION_COL as usize, Cell::Diversion);
    }
    g
}

pub fn optimal_plan(variant: EnvVariant) -> Vec<ActionId> {
    match variant {
        EnvVariant::Train => vec![RIGHT; 6],
        EnvVariant::Eval => {
            let mut p = vec![RIGHT; 6];
            p.push(UP);
            p
        }
    }
}
