//! Deterministic grid world: floorplan model, lattice kinematics, egocentric
//! visibility and the success predicate.

mod floorplan;
mod kinematics;
mod visibility;

pub use floorplan::{
    Floorplan, FloorplanDoc, FloorplanError, HeightClass, ObjectDoc, ObjectInstance, PoseDoc,
    Tile,
};
pub use kinematics::{apply_action, Action, ActionDurations, ActionModel, BodyDims, RobotState, Transition};
pub use visibility::{
    is_success, occlusion_of, visible_entities, Camera, Sighting, SuccessCriteria, UnknownClass,
};

use serde::{Deserialize, Serialize};

/// A lattice cell. Cell `(x, y)` is the unit square centred on `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn chebyshev(self, other: Cell) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn manhattan(self, other: Cell) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }
}

impl From<[i32; 2]> for Cell {
    fn from(v: [i32; 2]) -> Self {
        Cell::new(v[0], v[1])
    }
}

/// Unit lattice step for a heading that is a multiple of 45 degrees.
///
/// Heading 0 points along +x and angles grow counter-clockwise, so 90 is +y.
pub fn heading_vector(heading_deg: u16) -> (i32, i32) {
    match heading_deg % 360 {
        0 => (1, 0),
        45 => (1, 1),
        90 => (0, 1),
        135 => (-1, 1),
        180 => (-1, 0),
        225 => (-1, -1),
        270 => (0, -1),
        315 => (1, -1),
        other => panic!("heading {other} is not on the 45 degree lattice"),
    }
}

/// Lattice heading (multiple of 45) pointing from `from` towards an adjacent `to`.
pub fn heading_between(from: Cell, to: Cell) -> Option<u16> {
    let d = ((to.x - from.x).signum(), (to.y - from.y).signum());
    if (to.x - from.x).abs() > 1 || (to.y - from.y).abs() > 1 {
        return None;
    }
    let h = match d {
        (1, 0) => 0,
        (1, 1) => 45,
        (0, 1) => 90,
        (-1, 1) => 135,
        (-1, 0) => 180,
        (-1, -1) => 225,
        (0, -1) => 270,
        (1, -1) => 315,
        _ => return None,
    };
    Some(h)
}

pub(crate) use visibility::march;
#[cfg(test)]
pub(crate) use floorplan::test_doc;
