//! The GeoSem map: every visited pose with its semantic snapshot and
//! landmark score, exploration bookkeeping, and backtracking queries.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::TripleStore;
use crate::math::{round, wrap_360, wrap_deg};
use crate::perception::{area_bearing_deg, ClassTable, EgoScene};
use crate::world::{apply_action, heading_vector, Action, ActionModel, Cell, Floorplan, RobotState, Transition};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandmarkParams {
    pub alpha: f64,
    /// A score below this fraction of the running maximum counts as low.
    pub tau_lm: f64,
    /// Maximum number of actions per episode.
    pub budget: usize,
}

impl Default for LandmarkParams {
    fn default() -> Self {
        Self { alpha: 1.0, tau_lm: 0.25, budget: 500 }
    }
}

impl LandmarkParams {
    pub fn is_valid(&self) -> bool {
        self.alpha > 0.0 && self.tau_lm > 0.0 && self.tau_lm < 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub x: i32,
    pub y: i32,
    pub heading_deg: u16,
}

impl Pose {
    pub fn cell(&self) -> Cell {
        Cell::new(self.x, self.y)
    }
}

impl From<RobotState> for Pose {
    fn from(s: RobotState) -> Self {
        Self { x: s.x, y: s.y, heading_deg: s.heading_deg }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observed {
    #[serde(rename = "class")]
    pub class_name: String,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: usize,
    pub pose: Pose,
    /// Action that led to this pose; `Stop` for the initial frame.
    pub action_taken: Action,
    #[serde(default)]
    pub blocked: bool,
    pub detections: Vec<Observed>,
    pub zone_prob: f64,
    pub landmark_score: f64,
    pub cum_rotation_deg: f64,
    pub sim_time_s: f64,
}

/// Landmark score of one frame: the mean relation probability of the visible
/// objects to the target, scaled by the zone probability, `alpha`, and the
/// share of a full turn already scanned at this location.
pub fn landmark_score<'a>(
    detections: impl IntoIterator<Item = (&'a str, f64)>,
    target: &str,
    zone_prob: f64,
    cum_rotation_deg: f64,
    knowledge: &TripleStore,
    classes: &ClassTable,
    params: &LandmarkParams,
) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (c, _) in detections {
        if classes.is_extension(c) {
            continue;
        }
        sum += knowledge.rp(c, target).unwrap_or(0.0);
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let rotation = (cum_rotation_deg.max(0.0) / 360.0).min(1.0);
    sum / n as f64 * zone_prob * params.alpha * rotation
}

/// Whether a score sequence has decreased strictly over its last two steps
/// and its last value sits below `tau_lm` of the sequence maximum.
pub fn is_low_sequence(scores: &[f64], tau_lm: f64) -> bool {
    let n = scores.len();
    if n < 3 {
        return false;
    }
    let (a, b, c) = (scores[n - 3], scores[n - 2], scores[n - 1]);
    let max = scores.iter().copied().fold(0.0, f64::max);
    a > b && b > c && c < tau_lm * max
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisitInfo {
    pub heading_mask: u8,
    pub visits: u32,
    pub best_score: f64,
    pub best_heading: u16,
    pub last_step: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum GeoSemError {
    #[error("every visited pose is fully explored")]
    ScanFull,
    #[error("no lattice path between the requested poses")]
    Unreachable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeoSemMap {
    params: LandmarkParams,
    rotation_deg: u16,
    steps: Vec<StepRecord>,
    visited: BTreeMap<Cell, VisitInfo>,
    frontier: BTreeSet<Cell>,
    blocked: BTreeSet<Cell>,
    no_go: BTreeSet<Cell>,
    /// Steps before this index are ignored by the low-score test.
    marker: usize,
}

/// Lattice neighbours reachable in one unit step for a rotation granularity.
pub fn lattice_neighbours(c: Cell, rotation_deg: u16) -> impl Iterator<Item = Cell> {
    (0..360 / rotation_deg).map(move |i| {
        let (dx, dy) = heading_vector(i * rotation_deg);
        c.offset(dx, dy)
    })
}

impl GeoSemMap {
    pub fn new(params: LandmarkParams, rotation_deg: u16) -> Self {
        Self {
            params,
            rotation_deg,
            steps: Vec::new(),
            visited: BTreeMap::new(),
            frontier: BTreeSet::new(),
            blocked: BTreeSet::new(),
            no_go: BTreeSet::new(),
            marker: 0,
        }
    }

    pub fn params(&self) -> &LandmarkParams {
        &self.params
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.steps.last()
    }

    pub fn visited(&self) -> &BTreeMap<Cell, VisitInfo> {
        &self.visited
    }

    pub fn frontier(&self) -> &BTreeSet<Cell> {
        &self.frontier
    }

    pub fn blocked(&self) -> &BTreeSet<Cell> {
        &self.blocked
    }

    pub fn no_go(&self) -> &BTreeSet<Cell> {
        &self.no_go
    }

    pub fn is_visited(&self, c: Cell) -> bool {
        self.visited.contains_key(&c)
    }

    /// Actions taken so far; the initial frame is not an action.
    pub fn actions_taken(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    fn full_mask(&self) -> u8 {
        let n = 360 / self.rotation_deg;
        ((1u16 << n) - 1) as u8
    }

    pub fn is_fully_scanned(&self, c: Cell) -> bool {
        self.visited.get(&c).is_some_and(|v| v.heading_mask == self.full_mask())
    }

    /// Headings not yet observed at `c`.
    pub fn missing_headings(&self, c: Cell) -> Vec<u16> {
        let mask = self.visited.get(&c).map_or(0, |v| v.heading_mask);
        (0..360 / self.rotation_deg).filter(|i| mask & (1 << i) == 0).map(|i| i * self.rotation_deg).collect()
    }

    pub fn mark_blocked(&mut self, c: Cell) {
        if !self.visited.contains_key(&c) {
            self.blocked.insert(c);
            self.frontier.remove(&c);
        }
    }

    pub fn mark_no_go(&mut self, c: Cell) {
        if !self.visited.contains_key(&c) {
            self.no_go.insert(c);
            self.frontier.remove(&c);
        }
    }

    /// Restarts the low-score history, e.g. after a backtrack.
    pub fn mark_backtrack(&mut self) {
        self.marker = self.steps.len();
    }

    /// Records a processed frame at `state`. `zone_prob` is the current zone relation.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        action: Action,
        blocked: bool,
        ego: &EgoScene,
        state: &RobotState,
        sim_time_s: f64,
        target: &str,
        zone_prob: f64,
        knowledge: &TripleStore,
        classes: &ClassTable,
        fov_deg: f64,
    ) -> &StepRecord {
        let pose = Pose::from(*state);
        let cum_rotation_deg = match self.steps.last() {
            None => 0.0,
            Some(prev) if prev.pose.cell() != pose.cell() => 0.0,
            Some(prev) => {
                let d = wrap_deg(f64::from(pose.heading_deg) - f64::from(prev.pose.heading_deg)).abs();
                prev.cum_rotation_deg + d
            }
        };
        let detections: Vec<Observed> = ego
            .detections
            .iter()
            .map(|d| Observed { class_name: d.class_name.clone(), confidence: d.confidence })
            .collect();
        let score = landmark_score(
            detections.iter().map(|d| (d.class_name.as_str(), d.confidence)),
            target,
            zone_prob,
            cum_rotation_deg,
            knowledge,
            classes,
            &self.params,
        );
        let step_index = self.steps.len();
        let idx = pose.heading_deg / self.rotation_deg;
        let v = self.visited.entry(pose.cell()).or_insert(VisitInfo {
            heading_mask: 0,
            visits: 0,
            best_score: f64::NEG_INFINITY,
            best_heading: pose.heading_deg,
            last_step: step_index,
        });
        v.heading_mask |= 1 << idx;
        v.visits += 1;
        v.last_step = step_index;
        if score > v.best_score {
            v.best_score = score;
            v.best_heading = pose.heading_deg;
        }
        self.frontier.remove(&pose.cell());
        self.blocked.remove(&pose.cell());

        let k = ego.areas.len();
        for a in &ego.areas {
            if !a.flags.has_free_space {
                continue;
            }
            let abs = f64::from(pose.heading_deg) + area_bearing_deg(a.index, k, fov_deg);
            let d = f64::from(self.rotation_deg);
            let h = wrap_360(round(abs / d) * d) as u16;
            let (dx, dy) = heading_vector(h);
            let c = pose.cell().offset(dx, dy);
            if !self.visited.contains_key(&c) && !self.blocked.contains(&c) && !self.no_go.contains(&c) {
                self.frontier.insert(c);
            }
        }

        self.steps.push(StepRecord {
            step_index,
            pose,
            action_taken: action,
            blocked,
            detections,
            zone_prob,
            landmark_score: score,
            cum_rotation_deg,
            sim_time_s,
        });
        self.steps.last().expect("just pushed")
    }

    /// Best score of each stay at one cell since the last backtrack, keeping
    /// only stays that scanned (rotated) or saw something relevant.
    fn informative_segments(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut cur: Option<(Cell, f64, bool)> = None;
        for s in &self.steps[self.marker.min(self.steps.len())..] {
            let c = s.pose.cell();
            match &mut cur {
                Some((cell, best, rotated)) if *cell == c => {
                    *best = best.max(s.landmark_score);
                    *rotated |= s.cum_rotation_deg > 0.0;
                }
                _ => {
                    if let Some((_, best, rotated)) = cur {
                        if rotated || best > 0.0 {
                            out.push(best);
                        }
                    }
                    cur = Some((c, s.landmark_score, s.cum_rotation_deg > 0.0));
                }
            }
        }
        if let Some((_, best, rotated)) = cur {
            if rotated || best > 0.0 {
                out.push(best);
            }
        }
        out
    }

    /// Low-score test, evaluated when the robot has just moved to a new cell.
    /// It looks at the best score of each informative stay since the last
    /// backtrack, excluding the stay just begun.
    pub fn is_low(&self) -> bool {
        let n = self.steps.len();
        if n < 2 || n <= self.marker + 1 {
            return false;
        }
        let (prev, last) = (&self.steps[n - 2], &self.steps[n - 1]);
        if prev.pose.cell() == last.pose.cell() {
            return false;
        }
        let mut seg = self.informative_segments();
        if last.landmark_score > 0.0 {
            seg.pop();
        }
        is_low_sequence(&seg, self.params.tau_lm)
    }

    /// Share of consecutive informative stays whose score increased.
    pub fn increasing_fraction(&self) -> Option<f64> {
        let seg = self.informative_segments();
        if seg.len() < 2 {
            return None;
        }
        let up = seg.windows(2).filter(|w| w[1] > w[0]).count();
        Some(up as f64 / (seg.len() - 1) as f64)
    }

    fn borders_frontier(&self, c: Cell) -> bool {
        lattice_neighbours(c, self.rotation_deg).any(|n| self.frontier.contains(&n))
    }

    /// Highest-scoring visited pose that still has something left to explore.
    pub fn best_backtrack_point(&self) -> Result<Pose, GeoSemError> {
        let full = self.full_mask();
        let mut best: Option<(Cell, &VisitInfo)> = None;
        for (&c, v) in &self.visited {
            if v.heading_mask == full && !self.borders_frontier(c) {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, b)) => v.best_score > b.best_score || (v.best_score == b.best_score && v.last_step > b.last_step),
            };
            if better {
                best = Some((c, v));
            }
        }
        best.map(|(c, v)| Pose { x: c.x, y: c.y, heading_deg: v.best_heading }).ok_or(GeoSemError::ScanFull)
    }

    /// Shortest action sequence from `from` to `to` over visited and frontier
    /// cells, checking every move against the plan. `heading` of `None`
    /// accepts any arrival heading.
    pub fn path_to(
        &self,
        plan: &Floorplan,
        model: &ActionModel,
        from: RobotState,
        to: Cell,
        heading: Option<u16>,
    ) -> Result<Vec<Action>, GeoSemError> {
        let allowed = |c: Cell| {
            c == to || self.visited.contains_key(&c) || (self.frontier.contains(&c) && !self.no_go.contains(&c))
        };
        bfs_actions(
            from,
            |s| s.cell() == to && heading.is_none_or(|h| h == s.heading_deg),
            |s, a| match apply_action(s, a, plan, model) {
                Transition::Moved(n) if allowed(n.cell()) => Some(n),
                _ => None,
            },
        )
        .ok_or(GeoSemError::Unreachable)
    }

    pub fn scan_full(&self) -> bool {
        if self.actions_taken() >= self.params.budget {
            return true;
        }
        let full = self.full_mask();
        self.frontier.is_empty() && !self.visited.is_empty() && self.visited.values().all(|v| v.heading_mask == full)
    }

    pub fn budget_exhausted(&self) -> bool {
        self.actions_taken() >= self.params.budget
    }
}

/// Breadth-first search over robot states. `step` returns the successor of a
/// state under an action, or `None` when the move is not allowed. Actions are
/// tried in the order Forward, RotateLeft, RotateRight, Backward.
pub fn bfs_actions(
    start: RobotState,
    mut goal: impl FnMut(&RobotState) -> bool,
    mut step: impl FnMut(RobotState, Action) -> Option<RobotState>,
) -> Option<Vec<Action>> {
    if goal(&start) {
        return Some(Vec::new());
    }
    const ORDER: [Action; 4] = [Action::Forward, Action::RotateLeft, Action::RotateRight, Action::Backward];
    let mut parent: BTreeMap<(Cell, u16), ((Cell, u16), Action)> = BTreeMap::new();
    let key = |s: &RobotState| (s.cell(), s.heading_deg);
    let mut queue = VecDeque::from([start]);
    let mut seen = BTreeSet::from([key(&start)]);
    while let Some(s) = queue.pop_front() {
        for a in ORDER {
            let Some(n) = step(s, a) else { continue };
            if !seen.insert(key(&n)) {
                continue;
            }
            parent.insert(key(&n), (key(&s), a));
            if goal(&n) {
                let mut out = Vec::new();
                let mut k = key(&n);
                while k != key(&start) {
                    let (p, a) = parent[&k];
                    out.push(a);
                    k = p;
                }
                out.reverse();
                return Some(out);
            }
            queue.push_back(n);
        }
    }
    None
}
