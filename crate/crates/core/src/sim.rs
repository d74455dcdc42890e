//! Shared world stepping used by the agent, the baselines and human sessions.
//!
//! Every action source goes through [`Simulator::act`] and
//! [`Simulator::observe`], so kinematics, perception, timing and the
//! success check are identical whoever is driving.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::{detect, render_ego, segment_areas, ClassTable, DetectorModel, EgoScene};
use crate::world::{
    apply_action, is_success, Action, ActionModel, BodyDims, Camera, Floorplan, RobotState, SuccessCriteria,
    Transition,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub camera: Camera,
    pub detector: DetectorModel,
    pub action_model: ActionModel,
    pub criteria: SuccessCriteria,
    pub k_areas: usize,
    pub dims: BodyDims,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            camera: Camera::default(),
            detector: DetectorModel::default(),
            action_model: ActionModel::default(),
            criteria: SuccessCriteria::default(),
            k_areas: 3,
            dims: BodyDims::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SimError {
    #[error("unknown object class {0:?}")]
    UnknownClass(String),
    #[error("start pose ({x}, {y}) does not fit the robot body")]
    BadStart { x: i32, y: i32 },
    #[error("invalid simulator configuration: {0}")]
    BadConfig(&'static str),
}

/// Seed for the detector on frame `step` of an episode seeded with `seed`.
pub fn frame_seed(seed: u64, step: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(step))
}

/// Running state of one episode in the simulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub state: RobotState,
    pub seed: u64,
    pub elapsed_s: f64,
    pub actions: Vec<Action>,
    pub blocked: usize,
    frames: u64,
}

impl Run {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActOutcome {
    pub moved: bool,
    pub previous: RobotState,
}

#[derive(Clone, Debug)]
pub struct Simulator<'a> {
    plan: &'a Floorplan,
    classes: &'a ClassTable,
    target: String,
    config: SimConfig,
}

impl<'a> Simulator<'a> {
    pub fn new(plan: &'a Floorplan, classes: &'a ClassTable, target: &str, config: SimConfig) -> Result<Self, SimError> {
        if classes.get(target).is_none() {
            return Err(SimError::UnknownClass(target.into()));
        }
        classes.check_plan(plan).map_err(|e| SimError::UnknownClass(e.0))?;
        if !config.action_model.is_valid() {
            return Err(SimError::BadConfig("action model"));
        }
        if !config.detector.is_valid() {
            return Err(SimError::BadConfig("detector model"));
        }
        if config.k_areas == 0 || !(config.camera.fov_deg > 0.0 && config.camera.fov_deg < 180.0) || !(config.camera.range_cells > 0.0) {
            return Err(SimError::BadConfig("camera or area count"));
        }
        Ok(Self { plan, classes, target: target.into(), config })
    }

    pub fn plan(&self) -> &'a Floorplan {
        self.plan
    }

    pub fn classes(&self) -> &'a ClassTable {
        self.classes
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn start(&self, start: RobotState, seed: u64) -> Result<Run, SimError> {
        let start = RobotState { dims: self.config.dims, ..start };
        if !self.config.action_model.body_fits(self.plan, start.dims, start.cell())
            || !start.heading_deg.is_multiple_of(self.config.action_model.rotation_deg)
        {
            return Err(SimError::BadStart { x: start.x, y: start.y });
        }
        Ok(Run { state: start, seed, elapsed_s: 0.0, actions: Vec::new(), blocked: 0, frames: 0 })
    }

    /// Executes one action; its duration is charged whether or not it moved.
    pub fn act(&self, run: &mut Run, action: Action) -> ActOutcome {
        let previous = run.state;
        run.actions.push(action);
        run.elapsed_s += self.config.action_model.duration(action);
        match apply_action(run.state, action, self.plan, &self.config.action_model) {
            Transition::Moved(s) => {
                run.state = s;
                ActOutcome { moved: true, previous }
            }
            Transition::Blocked => {
                run.blocked += 1;
                ActOutcome { moved: false, previous }
            }
        }
    }

    /// Processes one frame at the current pose and charges its latency.
    pub fn observe(&self, run: &mut Run) -> EgoScene {
        let ego = self.frame_at(&run.state, frame_seed(run.seed, run.frames));
        run.frames += 1;
        run.elapsed_s += ego.processing_latency_s;
        ego
    }

    /// The frame the detector would produce at `state` with `seed`.
    pub fn frame_at(&self, state: &RobotState, seed: u64) -> EgoScene {
        let truth = render_ego(state, self.plan, &self.config.camera, self.classes);
        let ego = detect(&truth, &self.config.detector, seed, self.classes);
        segment_areas(ego, self.config.k_areas, self.classes)
    }

    /// The target is found when it is geometrically visible under the
    /// success criteria and the processed frame reports it.
    pub fn found(&self, state: &RobotState, ego: &EgoScene) -> bool {
        ego.contains_class(&self.target)
            && is_success(state, self.plan, &self.target, &self.config.camera, &self.config.criteria, self.classes)
                .unwrap_or(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::test_table;
    use crate::world::{test_doc, HeightClass, ObjectDoc};
    use alloc::vec;

    #[test]
    fn seeds_differ_per_frame() {
        assert_ne!(frame_seed(0, 0), frame_seed(0, 1));
        assert_ne!(frame_seed(0, 0), frame_seed(1, 0));
        assert_eq!(frame_seed(7, 3), frame_seed(7, 3));
    }

    #[test]
    fn time_accounting() {
        let mut d = test_doc(&["....", "....", "...."]);
        d.objects.push(ObjectDoc {
            class: "cup".into(),
            anchor: [3, 1],
            footprint: vec![],
            height_class: HeightClass::Surface,
            on_top_of: None,
            restricted: false,
            obstacle: false,
        });
        let plan = Floorplan::from_doc(&d).unwrap();
        let t = test_table();
        let cfg = SimConfig { detector: DetectorModel::noiseless(), ..SimConfig::default() };
        let sim = Simulator::new(&plan, &t, "cup", cfg).unwrap();
        let mut run = sim.start(RobotState::new(0, 1, 180, BodyDims::default()), 0).unwrap();
        let ego = sim.observe(&mut run);
        assert!(!sim.found(&run.state, &ego));
        let out = sim.act(&mut run, Action::Forward);
        assert!(!out.moved);
        sim.act(&mut run, Action::RotateLeft);
        sim.act(&mut run, Action::RotateLeft);
        let ego = sim.observe(&mut run);
        assert!(sim.found(&run.state, &ego));
        let expect = 0.033 + 1.5 + 1.0 + 1.0 + 0.033;
        assert!((run.elapsed_s - expect).abs() < 1e-12);
        assert_eq!(run.blocked, 1);
        assert!(Simulator::new(&plan, &t, "unicorn", cfg).is_err());
    }
}
