use alloc::vec::Vec;

use thiserror::Error;

use crate::world::{apply_action, heading_vector, Action, ActionModel, Cell, Floorplan, RobotState, Transition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("no sidestep clears the obstacle within the allowed distance")]
pub struct BypassFailed;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Right,
    Left,
}

struct Sim<'a> {
    plan: &'a Floorplan,
    model: &'a ActionModel,
    avoid: &'a dyn Fn(Cell) -> bool,
    state: RobotState,
    out: Vec<Action>,
}

impl Sim<'_> {
    fn go(&mut self, a: Action) -> bool {
        match apply_action(self.state, a, self.plan, self.model) {
            Transition::Moved(n) if !(self.avoid)(n.cell()) => {
                self.state = n;
                self.out.push(a);
                true
            }
            _ => false,
        }
    }

    fn turn(&mut self, a: Action) {
        for _ in 0..90 / self.model.rotation_deg {
            self.go(a);
        }
    }

    /// Whether a Forward along `heading` from here would succeed.
    fn clear(&self, heading: u16) -> bool {
        let probe = RobotState { heading_deg: heading, ..self.state };
        matches!(apply_action(probe, Action::Forward, self.plan, self.model), Transition::Moved(n) if !(self.avoid)(n.cell()))
    }
}

fn try_side(
    plan: &Floorplan,
    model: &ActionModel,
    state: RobotState,
    max_cells: usize,
    side: Side,
    avoid: &dyn Fn(Cell) -> bool,
) -> Option<Vec<Action>> {
    let (away, back) = match side {
        Side::Right => (Action::RotateRight, Action::RotateLeft),
        Side::Left => (Action::RotateLeft, Action::RotateRight),
    };
    let original = state.heading_deg;
    let toward_line = match side {
        Side::Right => (original + 90) % 360,
        Side::Left => (original + 270) % 360,
    };
    let mut s = Sim { plan, model, avoid, state, out: Vec::new() };
    s.turn(away);
    let mut shift = 0;
    loop {
        if shift >= max_cells || !s.go(Action::Forward) {
            return None;
        }
        shift += 1;
        if s.clear(original) {
            break;
        }
    }
    s.turn(back);
    let mut passed = 0;
    loop {
        if passed >= max_cells || !s.go(Action::Forward) {
            return None;
        }
        passed += 1;
        if s.clear(toward_line) {
            break;
        }
    }
    s.turn(back);
    for _ in 0..shift {
        if !s.go(Action::Forward) {
            return None;
        }
    }
    s.turn(away);
    debug_assert_eq!(s.state.heading_deg, original);
    Some(s.out)
}

/// Sidestep plan around an obstacle directly ahead that returns to the
/// original line of travel and heading, trying the right side first.
/// The robot must be on a lattice-aligned (non-diagonal) heading.
pub fn manhattan_bypass(
    plan: &Floorplan,
    model: &ActionModel,
    state: RobotState,
    max_cells: usize,
    avoid: &dyn Fn(Cell) -> bool,
) -> Result<Vec<Action>, BypassFailed> {
    let (dx, dy) = heading_vector(state.heading_deg);
    if dx != 0 && dy != 0 {
        return Err(BypassFailed);
    }
    try_side(plan, model, state, max_cells, Side::Right, avoid)
        .or_else(|| try_side(plan, model, state, max_cells, Side::Left, avoid))
        .ok_or(BypassFailed)
}
