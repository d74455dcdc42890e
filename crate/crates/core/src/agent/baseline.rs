use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EpisodeResult, Termination};
use crate::geosem::{Observed, Pose, StepRecord};
use crate::perception::EgoScene;
use crate::sim::{Run, SimError, Simulator};
use crate::world::{Action, RobotState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselinePolicy {
    RandomWalk,
    GreedyFreeSpace,
}

fn record(step_index: usize, state: &RobotState, action: Action, blocked: bool, ego: &EgoScene, t: f64) -> StepRecord {
    StepRecord {
        step_index,
        pose: Pose::from(*state),
        action_taken: action,
        blocked,
        detections: ego.detections.iter().map(|d| Observed { class_name: d.class_name.clone(), confidence: d.confidence }).collect(),
        zone_prob: 0.0,
        landmark_score: 0.0,
        cum_rotation_deg: 0.0,
        sim_time_s: t,
    }
}

/// An episode driven by an external action source: baselines, replays and
/// human players. Each action is followed by one processed frame.
pub struct ManualRun<'s, 'p> {
    sim: &'s Simulator<'p>,
    pub run: Run,
    ego: EgoScene,
    trace: Vec<StepRecord>,
}

impl<'s, 'p> ManualRun<'s, 'p> {
    pub fn begin(sim: &'s Simulator<'p>, start: RobotState, seed: u64) -> Result<Self, SimError> {
        let mut run = sim.start(start, seed)?;
        let ego = sim.observe(&mut run);
        let trace = alloc::vec![record(0, &run.state, Action::Stop, false, &ego, run.elapsed_s)];
        Ok(Self { sim, run, ego, trace })
    }

    pub fn ego(&self) -> &EgoScene {
        &self.ego
    }

    pub fn trace(&self) -> &[StepRecord] {
        &self.trace
    }

    pub fn found(&self) -> bool {
        self.sim.found(&self.run.state, &self.ego)
    }

    /// Acts and processes the next frame. Returns whether the action moved.
    pub fn step(&mut self, action: Action) -> bool {
        let moved = self.sim.act(&mut self.run, action).moved;
        self.ego = self.sim.observe(&mut self.run);
        let n = self.trace.len();
        self.trace.push(record(n, &self.run.state, action, !moved, &self.ego, self.run.elapsed_s));
        moved
    }

    pub fn finish(self, termination: Termination) -> EpisodeResult {
        EpisodeResult {
            success: termination == Termination::Found,
            termination,
            steps: self.run.steps(),
            sim_time_s: self.run.elapsed_s,
            blocked: self.run.blocked,
            landmark_trace: self.trace.iter().map(|s| s.landmark_score).collect(),
            final_pose: Pose::from(self.run.state),
            actions: self.run.actions,
            trace: self.trace,
            decisions: Vec::new(),
        }
    }
}

fn drive(
    sim: &Simulator,
    start: RobotState,
    budget: usize,
    seed: u64,
    mut policy: impl FnMut(&EgoScene, bool) -> Action,
) -> Result<EpisodeResult, SimError> {
    let mut m = ManualRun::begin(sim, start, seed)?;
    let mut last_blocked = false;
    let termination = loop {
        if m.found() {
            break Termination::Found;
        }
        if m.run.steps() >= budget {
            break Termination::Budget;
        }
        let a = policy(m.ego(), last_blocked);
        last_blocked = !m.step(a);
    };
    Ok(m.finish(termination))
}

/// Uniformly random moves among the four motion actions.
pub fn random_walk(sim: &Simulator, start: RobotState, budget: usize, seed: u64) -> Result<EpisodeResult, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005E_ED0F_5A3D);
    const MOVES: [Action; 4] = [Action::Forward, Action::Backward, Action::RotateLeft, Action::RotateRight];
    drive(sim, start, budget, seed, |_, _| MOVES[rng.random_range(0..MOVES.len())])
}

/// Drives forward whenever the middle area shows free floor, otherwise
/// turns left.
pub fn greedy_free_space(sim: &Simulator, start: RobotState, budget: usize, seed: u64) -> Result<EpisodeResult, SimError> {
    drive(sim, start, budget, seed, |ego, blocked| {
        let mid = ego.areas.len() / 2;
        let free = ego.areas.get(mid).is_some_and(|a| a.flags.has_free_space);
        if free && !blocked {
            Action::Forward
        } else {
            Action::RotateLeft
        }
    })
}
