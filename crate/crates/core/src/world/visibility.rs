use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Cell, Floorplan, ObjectInstance, RobotState};
use crate::math::{atan2, cos_deg, hypot, rad_to_deg, round, sin_deg, wrap_deg};
use crate::perception::ClassTable;

/// Rays cast across an object's angular extent when measuring occlusion.
pub(crate) const OCCLUSION_RAYS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Camera {
    pub fov_deg: f64,
    pub range_cells: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self { fov_deg: 90.0, range_cells: 9.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sighting {
    /// Index into [`Floorplan::objects`].
    pub object: usize,
    pub distance: f64,
    /// Bearing of the anchor relative to the heading, positive to the left.
    pub bearing_deg: f64,
    pub occluded_fraction: f64,
    /// Angular extent `(left, right)` of the footprint relative to the heading.
    pub extent_deg: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuccessCriteria {
    pub max_occlusion: f64,
    pub min_confidence: f64,
}

impl Default for SuccessCriteria {
    fn default() -> Self {
        Self { max_occlusion: 0.7, min_confidence: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("unknown object class {0:?}")]
pub struct UnknownClass(pub String);

/// Walks the cells crossed by a ray from `origin` (cell-centre units) at the
/// absolute angle `angle_deg`, skipping the origin cell. `visit` receives each
/// cell and the ray parameter at which it is entered; returning `false` stops.
pub(crate) fn march(origin: (f64, f64), angle_deg: f64, max_t: f64, mut visit: impl FnMut(Cell, f64) -> bool) {
    let (dx, dy) = (cos_deg(angle_deg), sin_deg(angle_deg));
    let (ox, oy) = origin;
    let mut cx = round(ox) as i32;
    let mut cy = round(oy) as i32;
    let eps = 1e-12;
    let (step_x, mut t_max_x, t_delta_x) = if dx > eps {
        (1, (f64::from(cx) + 0.5 - ox) / dx, 1.0 / dx)
    } else if dx < -eps {
        (-1, (f64::from(cx) - 0.5 - ox) / dx, -1.0 / dx)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    };
    let (step_y, mut t_max_y, t_delta_y) = if dy > eps {
        (1, (f64::from(cy) + 0.5 - oy) / dy, 1.0 / dy)
    } else if dy < -eps {
        (-1, (f64::from(cy) - 0.5 - oy) / dy, -1.0 / dy)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    };
    loop {
        let t = if t_max_x < t_max_y {
            cx += step_x;
            let t = t_max_x;
            t_max_x += t_delta_x;
            t
        } else {
            cy += step_y;
            let t = t_max_y;
            t_max_y += t_delta_y;
            t
        };
        if t > max_t || !visit(Cell::new(cx, cy), t) {
            return;
        }
    }
}

fn blocks_view_of(plan: &Floorplan, cell: Cell, target: usize, obj: &ObjectInstance) -> bool {
    if plan.is_wall(cell) {
        return true;
    }
    plan.obstacles_at(cell).iter().any(|&o| {
        o != target && Some(o) != obj.on_top_of && plan.objects()[o].height_class >= obj.height_class
    })
}

/// Absolute bearing to the anchor and the relative angular extent
/// `(min, max)` of the footprint around it, in degrees.
fn angular_extent(state: &RobotState, obj: &ObjectInstance) -> (f64, f64, f64) {
    let (px, py) = (f64::from(state.x), f64::from(state.y));
    let centre = rad_to_deg(atan2(f64::from(obj.anchor.y) - py, f64::from(obj.anchor.x) - px));
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in &obj.footprint {
        for (ox, oy) in [(-0.5, -0.5), (-0.5, 0.5), (0.5, -0.5), (0.5, 0.5)] {
            let a = rad_to_deg(atan2(f64::from(c.y) + oy - py, f64::from(c.x) + ox - px));
            let rel = wrap_deg(a - centre);
            lo = lo.min(rel);
            hi = hi.max(rel);
        }
    }
    (centre, lo, hi)
}

/// Fraction of rays across the object's angular extent that are stopped by a
/// wall or by an obstacle at least as tall before reaching the footprint.
/// The object's own support never blocks it.
pub fn occlusion_of(state: &RobotState, plan: &Floorplan, object: usize) -> f64 {
    let obj = &plan.objects()[object];
    if obj.covers(state.cell()) {
        return 0.0;
    }
    let (centre, lo, hi) = angular_extent(state, obj);
    let origin = (f64::from(state.x), f64::from(state.y));
    let reach = obj
        .footprint
        .iter()
        .map(|c| hypot(f64::from(c.x - state.x), f64::from(c.y - state.y)))
        .fold(0.0, f64::max)
        + 1.5;
    let (mut hit, mut blocked) = (0usize, 0usize);
    for k in 0..OCCLUSION_RAYS {
        let angle = centre + lo + (k as f64 + 0.5) / OCCLUSION_RAYS as f64 * (hi - lo);
        march(origin, angle, reach, |cell, _| {
            if obj.covers(cell) {
                hit += 1;
                false
            } else if blocks_view_of(plan, cell, object, obj) {
                blocked += 1;
                false
            } else {
                true
            }
        });
    }
    if hit + blocked == 0 {
        1.0
    } else {
        blocked as f64 / (hit + blocked) as f64
    }
}

/// Objects within range and field of view that are not fully occluded,
/// ordered by object index.
pub fn visible_entities(state: &RobotState, plan: &Floorplan, camera: &Camera) -> Vec<Sighting> {
    let half = camera.fov_deg / 2.0;
    let mut out = Vec::new();
    for (i, obj) in plan.objects().iter().enumerate() {
        if obj.covers(state.cell()) {
            out.push(Sighting {
                object: i,
                distance: 0.0,
                bearing_deg: 0.0,
                occluded_fraction: 0.0,
                extent_deg: (half, -half),
            });
            continue;
        }
        let distance = hypot(f64::from(obj.anchor.x - state.x), f64::from(obj.anchor.y - state.y));
        if distance > camera.range_cells {
            continue;
        }
        let (centre, lo, hi) = angular_extent(state, obj);
        let bearing = wrap_deg(centre - f64::from(state.heading_deg));
        if bearing.abs() > half + 1e-9 {
            continue;
        }
        let occluded = occlusion_of(state, plan, i);
        if occluded >= 1.0 {
            continue;
        }
        out.push(Sighting {
            object: i,
            distance,
            bearing_deg: bearing,
            occluded_fraction: occluded,
            extent_deg: (bearing + hi, bearing + lo),
        });
    }
    out
}

/// The target counts as found when an instance of its class is in view,
/// within detector range, occluded at most `max_occlusion`, and its noiseless
/// confidence `1 - occluded_fraction` reaches `min_confidence`.
pub fn is_success(
    state: &RobotState,
    plan: &Floorplan,
    target: &str,
    camera: &Camera,
    criteria: &SuccessCriteria,
    classes: &ClassTable,
) -> Result<bool, UnknownClass> {
    if classes.get(target).is_none() {
        return Err(UnknownClass(target.into()));
    }
    Ok(visible_entities(state, plan, camera).iter().any(|s| {
        plan.objects()[s.object].class_name == target
            && s.occluded_fraction <= criteria.max_occlusion
            && 1.0 - s.occluded_fraction >= criteria.min_confidence
    }))
}
