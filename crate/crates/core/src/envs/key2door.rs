//! Key2Door corridor.
//!
//! Seven cells in a row. The key lies in cell 0 and is picked up on entry;
//! the door is cell 6. Moving right from cell 5 opens the door when the key
//! is held (reward +1, episode ends) and otherwise bumps into it. Key
//! possession is hidden from the observation.

use super::{det, Cell, EnvVariant, GridSpec};
use crate::fpomdp::{ActionId, FactoredPomdp, ObservationVector, StateVector};

pub const CELLS: u8 = 7;
pub const KEY_CELL: u8 = 0;
pub const DOOR_CELL: u8 = 6;
pub const HORIZON: usize = 20;

pub const LOCATION: usize = 0;
pub const KEY: usize = 1;

pub const LEFT: ActionId = ActionId(0);
pub const RIGHT: ActionId = ActionId(1);

pub fn start(variant: EnvVariant) -> u8 {
    match variant {
        EnvVariant::Train => 1,
        EnvVariant::Eval => 5,
    }
}

pub fn build(variant: EnvVariant) -> FactoredPomdp {
    FactoredPomdp::builder("key2door", variant.as_str())
        .variable("x", CELLS)
        .variable("y", 2)
        .actions(&["left", "right"])
        .initial(vec![(StateVector(vec![start(variant), 0]), 1.0)])
        .horizon(HORIZON)
        .build(
            |s, a| {
                let x = s.get(LOCATION);
                let key = s.get(KEY);
                if a == LEFT {
                    let n = x.saturating_sub(1);
                    let key = if n == KEY_CELL { 1 } else { key };
                    return det(StateVector(vec![n, key]), -0.1);
                }
                if x + 1 == DOOR_CELL {
                    return if key == 1 {
                        det(StateVector(vec![DOOR_CELL, key]), 1.0)
                    } else {
                        det(s.clone(), -0.1)
                    };
                }
                det(StateVector(vec![x + 1, key]), -0.1)
            },
            |s| ObservationVector::project(s, &[LOCATION]),
            |s| s.get(LOCATION) == DOOR_CELL,
        )
        .expect("key2door is well formed")
}

pub fn grid(variant: EnvVariant) -> GridSpec {
    let mut g = GridSpec::new(1, CELLS as usize);
    for c in 0..CELLS as usize {
        g.set(0, c, Cell::Open);
    }
    g.set(0, KEY_CELL as usize, Cell::Key);
    g.set(0, DOOR_CELL as usize, Cell::Door);
    let s = start(variant) as usize;
    g.set(0, s, Cell::Start);
    g
}

pub fn optimal_plan(variant: EnvVariant) -> Vec<ActionId> {
    let back = start(variant) as usize;
    let mut p = vec![LEFT; back];
    p.extend([RIGHT; 6]);
    p
}
