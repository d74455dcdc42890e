use serde::{Deserialize, Serialize};

use super::{heading_vector, Cell, Floorplan};

/// The five-action control set shared by the agent and human players.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Forward,
    Backward,
    RotateLeft,
    RotateRight,
    Stop,
}

impl Action {
    pub const ALL: [Action; 5] =
        [Action::Forward, Action::Backward, Action::RotateLeft, Action::RotateRight, Action::Stop];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Forward => "Forward",
            Action::Backward => "Backward",
            Action::RotateLeft => "RotateLeft",
            Action::RotateRight => "RotateRight",
            Action::Stop => "Stop",
        }
    }

    pub fn parse(s: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.as_str() == s)
    }

    pub fn is_translation(self) -> bool {
        matches!(self, Action::Forward | Action::Backward)
    }

    pub fn is_rotation(self) -> bool {
        matches!(self, Action::RotateLeft | Action::RotateRight)
    }
}

/// Robot body size in cells. The body is swept as a square of side
/// `max(width, length)` centred on the robot cell, independent of heading.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct BodyDims {
    pub width: u8,
    pub length: u8,
}

impl Default for BodyDims {
    fn default() -> Self {
        Self { width: 1, length: 1 }
    }
}

impl BodyDims {
    fn side(self) -> i32 {
        i32::from(self.width.max(self.length).max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RobotState {
    pub x: i32,
    pub y: i32,
    pub heading_deg: u16,
    pub dims: BodyDims,
}

impl RobotState {
    pub fn new(x: i32, y: i32, heading_deg: u16, dims: BodyDims) -> Self {
        Self { x, y, heading_deg: heading_deg % 360, dims }
    }

    pub fn cell(&self) -> Cell {
        Cell::new(self.x, self.y)
    }

    pub fn ahead(&self) -> Cell {
        let (dx, dy) = heading_vector(self.heading_deg);
        self.cell().offset(dx, dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionDurations {
    pub forward_s: f64,
    pub backward_s: f64,
    pub rotate_s: f64,
    pub stop_s: f64,
}

impl Default for ActionDurations {
    fn default() -> Self {
        Self { forward_s: 1.5, backward_s: 1.5, rotate_s: 1.0, stop_s: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionModel {
    pub step_cells: u32,
    /// Rotation granularity: 45 or 90.
    pub rotation_deg: u16,
    pub durations: ActionDurations,
    /// Extra margin (cells) kept around the body when translating.
    #[serde(default)]
    pub clearance_cells: u8,
}

impl Default for ActionModel {
    fn default() -> Self {
        Self { step_cells: 1, rotation_deg: 90, durations: ActionDurations::default(), clearance_cells: 0 }
    }
}

impl ActionModel {
    pub fn duration(&self, action: Action) -> f64 {
        match action {
            Action::Forward => self.durations.forward_s,
            Action::Backward => self.durations.backward_s,
            Action::RotateLeft | Action::RotateRight => self.durations.rotate_s,
            Action::Stop => self.durations.stop_s,
        }
    }

    pub fn headings(&self) -> u16 {
        360 / self.rotation_deg
    }

    pub fn is_valid(&self) -> bool {
        self.step_cells >= 1
            && matches!(self.rotation_deg, 45 | 90)
            && [self.durations.forward_s, self.durations.backward_s, self.durations.rotate_s, self.durations.stop_s]
                .iter()
                .all(|&d| d > 0.0)
    }

    /// Whether a body centred on `c` fits on traversable cells.
    pub fn body_fits(&self, plan: &Floorplan, dims: BodyDims, c: Cell) -> bool {
        let side = dims.side() + 2 * i32::from(self.clearance_cells);
        let lo = -((side - 1) / 2);
        let hi = side / 2;
        (lo..=hi).all(|dy| (lo..=hi).all(|dx| plan.is_traversable(c.offset(dx, dy))))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transition {
    Moved(RobotState),
    Blocked,
}

impl Transition {
    pub fn state_or(self, previous: RobotState) -> RobotState {
        match self {
            Transition::Moved(s) => s,
            Transition::Blocked => previous,
        }
    }
}

/// Applies one action on the lattice.
///
/// Translations move `step_cells` unit steps along (or against) the heading.
/// Each unit step requires the body to fit at the next cell; diagonal steps
/// additionally require both orthogonal corner cells so the body never clips
/// a wall corner.
pub fn apply_action(state: RobotState, action: Action, plan: &Floorplan, model: &ActionModel) -> Transition {
    let d = model.rotation_deg;
    match action {
        Action::Stop => Transition::Moved(state),
        Action::RotateLeft => Transition::Moved(RobotState { heading_deg: (state.heading_deg + d) % 360, ..state }),
        Action::RotateRight => {
            Transition::Moved(RobotState { heading_deg: (state.heading_deg + 360 - d) % 360, ..state })
        }
        Action::Forward | Action::Backward => {
            let (mut dx, mut dy) = heading_vector(state.heading_deg);
            if action == Action::Backward {
                dx = -dx;
                dy = -dy;
            }
            let mut c = state.cell();
            for _ in 0..model.step_cells {
                let next = c.offset(dx, dy);
                if !model.body_fits(plan, state.dims, next) {
                    return Transition::Blocked;
                }
                if dx != 0
                    && dy != 0
                    && !(model.body_fits(plan, state.dims, c.offset(dx, 0))
                        && model.body_fits(plan, state.dims, c.offset(0, dy)))
                {
                    return Transition::Blocked;
                }
                c = next;
            }
            Transition::Moved(RobotState { x: c.x, y: c.y, ..state })
        }
    }
}
