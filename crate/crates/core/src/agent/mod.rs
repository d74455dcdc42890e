//! The navigation policy and the episode loop.
//!
//! Each step processes one frame, folds it into the relation store and the
//! GeoSem map, and then picks an action by the first rule that applies:
//! backtrack on a falling landmark score, head for an opening when the zone
//! looks wrong, approach the area with the strongest relation evidence, move
//! into free space, and finally scan in place or backtrack.

mod baseline;
mod bypass;

pub use baseline::{greedy_free_space, random_walk, BaselinePolicy, ManualRun};
pub use bypass::{manhattan_bypass, BypassFailed};

use alloc::collections::{BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geosem::{bfs_actions, GeoSemMap, LandmarkParams, Observed, Pose, StepRecord};
use crate::knowledge::TripleStore;
use crate::math::{cos_deg, round, sin_deg, wrap_360};
use crate::perception::{area_bearing_deg, ClassTable, Detection, EgoScene, Tag};
use crate::sim::{Run, SimError, Simulator};
use crate::world::{heading_vector, Action, Camera, Cell, RobotState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentParams {
    /// Zone relation below this counts as low.
    pub tau_zone: f64,
    pub k_areas: usize,
    pub fov_deg: f64,
    pub range_cells: f64,
    /// Area indices in tie-break priority order.
    pub tie_break: Vec<usize>,
    pub bypass_max_cells: usize,
    /// An obstacle estimated at most this far away (cells) blocks its area.
    pub near_obstacle_cells: f64,
    /// Free-space moves into a cell visited this often are skipped.
    pub revisit_limit: u32,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            tau_zone: 0.15,
            k_areas: 3,
            fov_deg: 90.0,
            range_cells: 9.0,
            tie_break: alloc::vec![1, 0, 2],
            bypass_max_cells: 6,
            near_obstacle_cells: 1.5,
            revisit_limit: 2,
        }
    }
}

impl AgentParams {
    pub fn camera(&self) -> Camera {
        Camera { fov_deg: self.fov_deg, range_cells: self.range_cells }
    }

    pub fn is_valid(&self) -> bool {
        self.tau_zone > 0.0 && self.tau_zone < 1.0 && self.k_areas >= 1 && self.fov_deg > 0.0 && self.range_cells > 0.0
    }

    /// Rank of an area in the tie-break order; unlisted areas come last.
    fn rank(&self, area: usize) -> usize {
        self.tie_break.iter().position(|&a| a == area).unwrap_or(self.tie_break.len() + area)
    }
}

/// Kept areas with a positive relation score, best first; ties follow
/// `params.tie_break`.
pub fn rank_areas(scores: &[f64], kept: &[bool], params: &AgentParams) -> Vec<usize> {
    let mut ranked: Vec<usize> = (0..scores.len()).filter(|&i| kept.get(i).copied().unwrap_or(false) && scores[i] > 0.0).collect();
    ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(params.rank(a).cmp(&params.rank(b))));
    ranked
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Found,
    ScanFull,
    Budget,
    /// Ended by the player (Stop or quit).
    Stopped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    InitialScan,
    Backtrack,
    Opening,
    Relational,
    Bypass,
    FreeSpace,
    Scan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Index of the step record the decision was made on.
    pub step: usize,
    pub rule: Rule,
    pub area: Option<usize>,
    /// Per-area relation score; 0 for discarded areas.
    pub area_scores: Vec<f64>,
    /// Objects per area that entered the relation score.
    pub members: Vec<Vec<Observed>>,
    pub kept: Vec<bool>,
    pub goal: Option<Cell>,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub termination: Termination,
    pub actions: Vec<Action>,
    pub sim_time_s: f64,
    pub steps: usize,
    pub blocked: usize,
    pub landmark_trace: Vec<f64>,
    pub final_pose: Pose,
    pub trace: Vec<StepRecord>,
    pub decisions: Vec<Decision>,
}

/// One episode's running state: the simulator run plus the agent's map and
/// relation store, updated on every processed frame.
pub struct Episode<'s, 'p> {
    sim: &'s Simulator<'p>,
    pub run: Run,
    pub map: GeoSemMap,
    pub knowledge: TripleStore,
    ego: EgoScene,
    fov_deg: f64,
}

impl<'s, 'p> Episode<'s, 'p> {
    /// Starts the run and processes the first frame.
    pub fn begin(
        sim: &'s Simulator<'p>,
        start: RobotState,
        knowledge: TripleStore,
        landmark: LandmarkParams,
        seed: u64,
    ) -> Result<Self, SimError> {
        let mut run = sim.start(start, seed)?;
        let ego = sim.observe(&mut run);
        let map = GeoSemMap::new(landmark, sim.config().action_model.rotation_deg);
        let fov_deg = sim.config().camera.fov_deg;
        let mut e = Self { sim, run, map, knowledge, ego, fov_deg };
        e.absorb(Action::Stop, false);
        Ok(e)
    }

    pub fn ego(&self) -> &EgoScene {
        &self.ego
    }

    pub fn simulator(&self) -> &'s Simulator<'p> {
        self.sim
    }

    fn absorb(&mut self, action: Action, blocked: bool) {
        let classes = self.sim.classes();
        let target = self.sim.target();
        let names: Vec<&str> = self.ego.objects(classes).map(|d| d.class_name.as_str()).collect();
        let zone = self.knowledge.infer_zone(names.iter().copied());
        self.knowledge.update_relations(&self.ego, zone.as_deref(), classes);
        let zone_prob = self.knowledge.zone_relation(names.iter().copied(), target);
        self.map.update(
            action,
            blocked,
            &self.ego,
            &self.run.state,
            self.run.elapsed_s,
            target,
            zone_prob,
            &self.knowledge,
            classes,
            self.fov_deg,
        );
    }

    /// Acts, processes the next frame and updates map and knowledge.
    pub fn step(&mut self, action: Action) -> bool {
        let out = self.sim.act(&mut self.run, action);
        if !out.moved && action.is_translation() {
            let (mut dx, mut dy) = heading_vector(out.previous.heading_deg);
            if action == Action::Backward {
                dx = -dx;
                dy = -dy;
            }
            self.map.mark_blocked(out.previous.cell().offset(dx, dy));
        }
        self.ego = self.sim.observe(&mut self.run);
        self.absorb(action, !out.moved);
        out.moved
    }

    pub fn found(&self) -> bool {
        self.sim.found(&self.run.state, &self.ego)
    }

    /// Rotates through every heading in place, processing one frame each.
    /// Ends on the starting heading.
    pub fn rotation_scan(&mut self) -> Vec<(u16, EgoScene)> {
        let n = self.sim.config().action_model.headings();
        let mut out = Vec::with_capacity(usize::from(n));
        for _ in 0..n {
            self.step(Action::RotateLeft);
            out.push((self.run.state.heading_deg, self.ego.clone()));
        }
        out
    }

    fn termination(&self) -> Option<Termination> {
        if self.found() {
            Some(Termination::Found)
        } else if self.map.budget_exhausted() {
            Some(Termination::Budget)
        } else if self.map.scan_full() {
            Some(Termination::ScanFull)
        } else {
            None
        }
    }

    fn finish(self, termination: Termination, decisions: Vec<Decision>) -> EpisodeResult {
        let trace = self.map.steps().to_vec();
        EpisodeResult {
            success: termination == Termination::Found,
            termination,
            steps: self.run.actions.len(),
            actions: self.run.actions,
            sim_time_s: self.run.elapsed_s,
            blocked: self.run.blocked,
            landmark_trace: trace.iter().map(|s| s.landmark_score).collect(),
            final_pose: Pose::from(self.run.state),
            trace,
            decisions,
        }
    }
}

/// Continuous position estimate of a detection in cell units.
fn estimate_position(state: &RobotState, d: &Detection, classes: &ClassTable, cell_size_m: f64, fov_deg: f64) -> Option<(f64, f64)> {
    let dist = d.estimated_distance(classes, cell_size_m)?;
    let a = f64::from(state.heading_deg) + d.bearing_deg(fov_deg);
    Some((f64::from(state.x) + dist * cos_deg(a), f64::from(state.y) + dist * sin_deg(a)))
}

fn to_cell(p: (f64, f64)) -> Cell {
    Cell::new(round(p.0) as i32, round(p.1) as i32)
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Goal {
    cell: Cell,
    /// Reaching any cell within one step of `cell` completes the goal.
    adjacent: bool,
}

/// Re-plans allowed per step before falling back to a rotation.
const MAX_VETOES: usize = 8;

/// Searches this many cells beyond the bounding box of start and goal.
const SEARCH_MARGIN: i32 = 6;

struct Navigator<'a> {
    params: &'a AgentParams,
    classes: &'a ClassTable,
    target: String,
    cell_size_m: f64,
    rotation_deg: u16,
    queue: VecDeque<Action>,
    scan_log: Option<Vec<(u16, f64)>>,
    /// Run a rotation scan once the queued plan is done.
    scan_when_idle: bool,
    door: Option<DoorGoal>,
    reached: BTreeSet<Cell>,
    obstacles: BTreeSet<Cell>,
    /// Zones judged wrong for the target, each as a doorway and a cell on
    /// the zone's side of it.
    rejected: Vec<(Cell, Cell)>,
    /// Known cells of the rejected zones, refreshed every step; avoided
    /// while other options remain.
    left_behind: BTreeSet<Cell>,
    inside_left: bool,
    /// Best zone relation seen during scans in the current zone.
    zone_evidence: Option<f64>,
    /// Set while scanning just past a doorway.
    crossing: Option<Crossing>,
    /// Estimated cells of doorways seen but not yet walked through.
    seen_doors: BTreeSet<Cell>,
    decisions: Vec<Decision>,
}

/// A doorway just walked through, with what the scan beyond it showed.
struct Crossing {
    door: Cell,
    /// Unit step of the walk through the doorway.
    dir: (i32, i32),
    /// Best zone relation among scan frames that showed objects beyond the
    /// doorway, if any did.
    zone: Option<f64>,
}

/// Doorway being walked to: the estimated cell, the cell currently aimed
/// at, and the cells already tried.
struct DoorGoal {
    estimate: Cell,
    current: Cell,
    tried: Vec<Cell>,
}

struct AreaView {
    kept: Vec<bool>,
    scores: Vec<f64>,
    members: Vec<Vec<Observed>>,
    goals: Vec<Option<Goal>>,
}

impl<'a> Navigator<'a> {
    fn near_reached(&self, c: Cell) -> bool {
        self.reached.iter().any(|r| r.chebyshev(c) <= 1)
    }

    /// Records obstacle estimates and marks the surroundings of restricted
    /// detections as no-go.
    fn note_frame(&mut self, ep: &mut Episode) {
        let state = ep.run.state;
        let fov = self.params.fov_deg;
        for d in &ep.ego.detections {
            let ext = self.classes.is_extension(&d.class_name);
            if d.restricted && ext {
                // Restricted floor right in front.
                let mid = (d.bbox.centre_x() - 0.5).abs() < 0.5 / self.params.k_areas as f64;
                if mid {
                    ep.map.mark_no_go(state.ahead());
                }
                continue;
            }
            if ext {
                if self.classes.is_opening(&d.class_name) {
                    if let Some(p) = estimate_position(&state, d, self.classes, self.cell_size_m, fov) {
                        let c = to_cell(p);
                        let known = self.seen_doors.iter().any(|s| s.chebyshev(c) <= 1);
                        if !known && !self.near_reached(c) && !ep.map.is_visited(c) {
                            self.seen_doors.insert(c);
                        }
                    }
                }
                continue;
            }
            let Some(p) = estimate_position(&state, d, self.classes, self.cell_size_m, fov) else { continue };
            let c = to_cell(p);
            if d.restricted {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        ep.map.mark_no_go(c.offset(dx, dy));
                    }
                }
            } else if self.classes.has_tag(&d.class_name, Tag::Obstacle) && c != state.cell() {
                self.obstacles.insert(c);
            }
        }
    }

    /// Whether a Forward step is known to be clear: the cell ahead was stood
    /// on before, or the current frame shows floor straight ahead (and, on a
    /// diagonal, both corner cells are known).
    fn safe_ahead(&self, ep: &Episode) -> bool {
        let state = ep.run.state;
        let ahead = state.ahead();
        if ep.map.is_visited(ahead) {
            return true;
        }
        let k = ep.ego.areas.len();
        if k.is_multiple_of(2) || !ep.ego.areas[k / 2].flags.has_free_space {
            return false;
        }
        let (dx, dy) = heading_vector(state.heading_deg);
        let known = |c: Cell| ep.map.is_visited(c) || ep.map.frontier().contains(&c);
        dx == 0 || dy == 0 || (known(state.cell().offset(dx, 0)) && known(state.cell().offset(0, dy)))
    }

    fn passable(&self, map: &GeoSemMap, c: Cell, goal: Cell, avoid_left: bool) -> bool {
        if map.no_go().contains(&c) || map.blocked().contains(&c) || (avoid_left && self.left_behind.contains(&c)) {
            return false;
        }
        c == goal || map.is_visited(c) || !self.obstacles.contains(&c)
    }

    /// Optimistic plan towards a goal: unknown cells count as free.
    fn approach(&self, map: &GeoSemMap, state: RobotState, goal: Goal) -> Option<Vec<Action>> {
        let lo = Cell::new(state.x.min(goal.cell.x) - SEARCH_MARGIN, state.y.min(goal.cell.y) - SEARCH_MARGIN);
        let hi = Cell::new(state.x.max(goal.cell.x) + SEARCH_MARGIN, state.y.max(goal.cell.y) + SEARCH_MARGIN);
        let d = self.rotation_deg;
        let inside = |c: Cell| c.x >= lo.x && c.y >= lo.y && c.x <= hi.x && c.y <= hi.y;
        let avoid_left = !self.left_behind.contains(&state.cell());
        let ok = |c: Cell| inside(c) && self.passable(map, c, goal.cell, avoid_left);
        bfs_actions(
            state,
            |s| if goal.adjacent { s.cell().chebyshev(goal.cell) <= 1 && s.cell() != goal.cell } else { s.cell() == goal.cell },
            |s, a| match a {
                Action::RotateLeft => Some(RobotState { heading_deg: (s.heading_deg + d) % 360, ..s }),
                Action::RotateRight => Some(RobotState { heading_deg: (s.heading_deg + 360 - d) % 360, ..s }),
                Action::Forward => {
                    let (dx, dy) = heading_vector(s.heading_deg);
                    let n = s.cell().offset(dx, dy);
                    let corners = dx == 0 || dy == 0 || (ok(s.cell().offset(dx, 0)) && ok(s.cell().offset(0, dy)));
                    (ok(n) && corners).then_some(RobotState { x: n.x, y: n.y, ..s })
                }
                _ => None,
            },
        )
    }

    fn area_goal_free(&self, state: RobotState, area: usize) -> Cell {
        let k = self.params.k_areas;
        let d = f64::from(self.rotation_deg);
        let bearing = area_bearing_deg(area, k, self.params.fov_deg);
        let mut rel = round(bearing / d) * d;
        if rel == 0.0 && 2 * area + 1 != k {
            rel = if bearing > 0.0 { d } else { -d };
        }
        let h = wrap_360(f64::from(state.heading_deg) + rel) as u16;
        let (dx, dy) = heading_vector(h);
        state.cell().offset(dx, dy)
    }

    fn view(&self, ep: &Episode, knowledge: &TripleStore) -> AreaView {
        let state = ep.run.state;
        let ego = &ep.ego;
        let k = ego.areas.len();
        let mut v = AreaView {
            kept: alloc::vec![true; k],
            scores: alloc::vec![0.0; k],
            members: alloc::vec![Vec::new(); k],
            goals: alloc::vec![None; k],
        };
        for (i, a) in ego.areas.iter().enumerate() {
            if a.flags.has_restricted {
                v.kept[i] = false;
                continue;
            }
            let mut wsum = 0.0;
            let mut acc = (0.0, 0.0);
            let mut target_at = None;
            for &di in &a.detections {
                let d = &ego.detections[di];
                if self.classes.is_extension(&d.class_name) {
                    continue;
                }
                let pos = estimate_position(&state, d, self.classes, self.cell_size_m, self.params.fov_deg);
                if self.classes.has_tag(&d.class_name, Tag::Obstacle) {
                    let near = d
                        .estimated_distance(self.classes, self.cell_size_m)
                        .is_some_and(|r| r <= self.params.near_obstacle_cells);
                    if near {
                        v.kept[i] = false;
                    }
                }
                let Some(p) = pos else { continue };
                if self.near_reached(to_cell(p)) {
                    continue;
                }
                let rp = knowledge.rp(&d.class_name, &self.target).unwrap_or(0.0);
                if rp <= 0.0 {
                    continue;
                }
                if d.class_name == self.target {
                    target_at = Some(p);
                }
                let w = rp * d.confidence;
                v.scores[i] += w;
                v.members[i].push(Observed { class_name: d.class_name.clone(), confidence: d.confidence });
                acc.0 += w * p.0;
                acc.1 += w * p.1;
                wsum += w;
            }
            if !v.kept[i] {
                v.scores[i] = 0.0;
                continue;
            }
            if let Some(p) = target_at {
                v.goals[i] = Some(Goal { cell: to_cell(p), adjacent: true });
            } else if wsum > 0.0 {
                v.goals[i] = Some(Goal { cell: to_cell((acc.0 / wsum, acc.1 / wsum)), adjacent: true });
            }
            if v.goals[i].is_some_and(|g| ep.map.no_go().contains(&g.cell)) {
                v.kept[i] = false;
                v.scores[i] = 0.0;
                v.goals[i] = None;
            }
        }
        v
    }

    fn record(&mut self, ep: &Episode, rule: Rule, area: Option<usize>, view: Option<&AreaView>, goal: Option<Cell>, action: Action) {
        let k = ep.ego.areas.len();
        self.decisions.push(Decision {
            step: ep.map.steps().len() - 1,
            rule,
            area,
            area_scores: view.map_or_else(|| alloc::vec![0.0; k], |v| v.scores.clone()),
            members: view.map_or_else(|| alloc::vec![Vec::new(); k], |v| v.members.clone()),
            kept: view.map_or_else(|| alloc::vec![true; k], |v| v.kept.clone()),
            goal,
            action,
        });
    }

    /// Plan back to the most promising unfinished pose, or `None` when every
    /// pose is exhausted.
    fn backtrack(&self, ep: &mut Episode) -> Option<Vec<Action>> {
        let plan = ep.sim.plan();
        let model = ep.sim.config().action_model;
        for _ in 0..16 {
            let p = ep.map.best_backtrack_point().ok()?;
            let frontier: Vec<Cell> = crate::geosem::lattice_neighbours(p.cell(), self.rotation_deg)
                .filter(|c| ep.map.frontier().contains(c))
                .collect();
            if let Some(&f) = frontier.first() {
                match ep.map.path_to(plan, &model, ep.run.state, f, None) {
                    Ok(path) if !path.is_empty() => return Some(path),
                    _ => {
                        ep.map.mark_blocked(f);
                        continue;
                    }
                }
            }
            let missing = ep.map.missing_headings(p.cell());
            let h = *missing.first()?;
            return match ep.map.path_to(plan, &model, ep.run.state, p.cell(), Some(h)) {
                Ok(path) if path.is_empty() => Some(alloc::vec![Action::RotateLeft]),
                Ok(path) => Some(path),
                Err(_) => None,
            };
        }
        None
    }

    /// Ranks headings during a rotation scan: relational evidence weighted
    /// by how well the zone fits the target, then unexplored doorways, then
    /// raw relational evidence and free space ahead.
    fn frame_utility(&self, ep: &Episode) -> f64 {
        let v = self.view(ep, &ep.knowledge);
        let best = v.scores.iter().copied().fold(0.0, f64::max);
        let state = ep.run.state;
        let names: Vec<&str> = ep.ego.objects(self.classes).map(|d| d.class_name.as_str()).collect();
        let zone = ep.knowledge.zone_relation(names.iter().copied(), &self.target);
        let door = ep.ego.detections.iter().any(|d| {
            self.classes.is_opening(&d.class_name)
                && estimate_position(&state, d, self.classes, self.cell_size_m, self.params.fov_deg)
                    .map(to_cell)
                    .is_some_and(|c| !self.near_reached(c) && !ep.map.is_visited(c))
        });
        let mid = ep.ego.areas.len() / 2;
        let free = ep.ego.areas.get(mid).is_some_and(|a| a.flags.has_free_space && !a.flags.has_restricted);
        let ahead_new = !ep.map.is_visited(state.ahead());
        zone * best
            + if door { 0.05 } else { 0.0 }
            + 0.001 * best
            + if free { 0.0001 } else { 0.0 }
            + if free && ahead_new { 0.0001 } else { 0.0 }
    }

    /// Plans a walk through the doorway at `cell`: the path onto it, one
    /// more step across, then a rotation scan.
    fn walk_through(&mut self, map: &GeoSemMap, state: RobotState, cell: Cell) -> bool {
        match self.approach(map, state, Goal { cell, adjacent: false }) {
            Some(path) if !path.is_empty() => {
                self.queue.extend(path);
                self.queue.push_back(Action::Forward);
                self.scan_when_idle = true;
                true
            }
            _ => false,
        }
    }

    /// After a blocked step on the way to a doorway, re-plans to it or, if
    /// the estimated cell itself turned out to be solid, to a neighbour.
    fn resume_door(&mut self, ep: &mut Episode) -> Option<Action> {
        let DoorGoal { estimate, current, mut tried } = self.door.take()?;
        let state = ep.run.state;
        let mut candidates = alloc::vec![current, estimate];
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            candidates.push(estimate.offset(dx, dy));
        }
        for c in candidates {
            let retry = c == current && !ep.map.blocked().contains(&c);
            if (!retry && tried.contains(&c)) || ep.map.blocked().contains(&c) || ep.map.is_visited(c) {
                continue;
            }
            if !tried.contains(&c) {
                tried.push(c);
            }
            if self.walk_through(&ep.map, state, c) {
                self.door = Some(DoorGoal { estimate, current: c, tried });
                let a = self.queue.pop_front()?;
                self.record(ep, Rule::Opening, None, None, Some(c), a);
                return Some(a);
            }
        }
        self.reached.insert(estimate);
        self.scan_when_idle = false;
        None
    }

    /// Shortest known route to a frontier cell that is not an estimated
    /// obstacle. Cells of zones left behind count only with `behind`. Ties go to the lowest cell.
    fn nearest_frontier(&self, ep: &Episode, behind: bool) -> Option<(Cell, Vec<Action>)> {
        let plan = ep.sim.plan();
        let model = ep.sim.config().action_model;
        let candidates: Vec<Cell> = ep
            .map
            .frontier()
            .iter()
            .copied()
            .filter(|c| !self.obstacles.contains(c) && !ep.map.no_go().contains(c))
            .collect();
        let mut best: Option<(Cell, Vec<Action>)> = None;
        for c in candidates {
            if !behind && self.left_behind.contains(&c) {
                continue;
            }
            let Ok(path) = ep.map.path_to(plan, &model, ep.run.state, c, None) else { continue };
            if path.is_empty() {
                continue;
            }
            if best.as_ref().is_none_or(|b| path.len() < b.1.len()) {
                best = Some((c, path));
            }
        }
        best
    }

    /// Shortest known route to a visited cell outside the zones left behind
    /// whose scan is incomplete.
    fn nearest_unscanned(&self, ep: &Episode) -> Option<(Cell, Vec<Action>)> {
        let plan = ep.sim.plan();
        let model = ep.sim.config().action_model;
        let mut best: Option<(Cell, Vec<Action>)> = None;
        for &c in ep.map.visited().keys() {
            if c == ep.run.state.cell() || self.left_behind.contains(&c) || ep.map.is_fully_scanned(c) {
                continue;
            }
            let Ok(path) = ep.map.path_to(plan, &model, ep.run.state, c, None) else { continue };
            if !path.is_empty() && best.as_ref().is_none_or(|b| path.len() < b.1.len()) {
                best = Some((c, path));
            }
        }
        best
    }

    /// Folds the objects beyond the doorway in this frame into the crossing's
    /// zone estimate.
    fn note_crossing_zone(&mut self, ep: &Episode) {
        let Some(x) = &self.crossing else { return };
        let state = ep.run.state;
        let beyond: Vec<&str> = ep
            .ego
            .objects(self.classes)
            .filter(|d| {
                estimate_position(&state, d, self.classes, self.cell_size_m, self.params.fov_deg).is_some_and(|p| {
                    let (ox, oy) = (p.0 - f64::from(x.door.x), p.1 - f64::from(x.door.y));
                    ox * f64::from(x.dir.0) + oy * f64::from(x.dir.1) > 0.0
                })
            })
            .map(|d| d.class_name.as_str())
            .collect();
        if beyond.is_empty() {
            return;
        }
        let z = ep.knowledge.zone_relation(beyond.iter().copied(), &self.target);
        if let Some(x) = &mut self.crossing {
            x.zone = Some(x.zone.map_or(z, |old| old.max(z)));
        }
    }

    /// Once the scan past a doorway is over: a zone that looks wrong is
    /// left behind as well.
    fn judge_crossing(&mut self, ep: &Episode) {
        let Some(x) = self.crossing.take() else { return };
        self.zone_evidence = x.zone;
        if x.zone.is_some_and(|z| z < self.params.tau_zone) {
            self.rejected.push((x.door, x.door.offset(x.dir.0, x.dir.1)));
            self.refresh_left_behind(&ep.map);
        }
    }

    /// Floods the known cells (visited or frontier) of each rejected zone
    /// from its side of the doorway.
    fn refresh_left_behind(&mut self, map: &GeoSemMap) {
        let mut out = BTreeSet::new();
        for &(door, side) in &self.rejected {
            out.insert(door);
            let mut todo = alloc::vec![side];
            while let Some(c) = todo.pop() {
                if c == door || out.contains(&c) || !(map.is_visited(c) || map.frontier().contains(&c)) {
                    continue;
                }
                out.insert(c);
                todo.extend(crate::geosem::lattice_neighbours(c, self.rotation_deg));
            }
        }
        self.left_behind = out;
    }

    /// Drops remembered doorways that were reached or lie in zones left behind.
    fn prune_doors(&mut self, map: &GeoSemMap) {
        let stale: Vec<Cell> = self
            .seen_doors
            .iter()
            .copied()
            .filter(|&c| self.near_reached(c) || map.is_visited(c) || map.no_go().contains(&c) || self.left_behind.contains(&c))
            .collect();
        for c in stale {
            self.seen_doors.remove(&c);
        }
    }

    /// Full turn in place, then face the heading with the best utility.
    fn start_scan(&mut self, ep: &Episode) -> Option<Action> {
        let n = usize::from(360 / self.rotation_deg);
        self.scan_log = Some(alloc::vec![(ep.run.state.heading_deg, self.frame_utility(ep))]);
        self.queue.extend(core::iter::repeat_n(Action::RotateLeft, n));
        let a = self.queue.pop_front()?;
        self.record(ep, Rule::InitialScan, None, None, None, a);
        Some(a)
    }

    fn decide(&mut self, ep: &mut Episode) -> Option<Action> {
        self.note_frame(ep);
        if self.scan_log.is_some() {
            let u = self.frame_utility(ep);
            if let Some(log) = &mut self.scan_log {
                log.push((ep.run.state.heading_deg, u));
            }
            if self.crossing.is_some() {
                self.note_crossing_zone(ep);
            } else {
                let names: Vec<&str> = ep.ego.objects(self.classes).map(|d| d.class_name.as_str()).collect();
                if !names.is_empty() {
                    let z = ep.knowledge.zone_relation(names.iter().copied(), &self.target);
                    self.zone_evidence = Some(self.zone_evidence.map_or(z, |old| old.max(z)));
                }
            }
        }
        if let Some(d) = &self.door {
            if ep.run.state.cell() == d.current {
                self.reached.insert(d.estimate);
                self.reached.insert(d.current);
                let here = d.current;
                let dir = heading_vector(ep.run.state.heading_deg);
                if self.zone_evidence.is_some_and(|z| z < self.params.tau_zone) {
                    self.rejected.push((here, here.offset(-dir.0, -dir.1)));
                }
                self.zone_evidence = None;
                self.crossing = Some(Crossing { door: here, dir, zone: None });
                self.door = None;
            }
        }
        self.refresh_left_behind(&ep.map);
        let inside = self.left_behind.contains(&ep.run.state.cell());
        if self.inside_left && !inside {
            // Back out of a rejected zone: what is known about it no longer
            // describes where the robot is.
            self.zone_evidence = None;
        }
        self.inside_left = inside;
        if let Some(a) = self.queue.pop_front() {
            return Some(a);
        }
        if let Some(a) = self.resume_door(ep) {
            return Some(a);
        }
        if let Some(log) = self.scan_log.take() {
            self.judge_crossing(ep);
            // Face the most promising heading seen during the scan.
            let (mut best_h, mut best_u) = (ep.run.state.heading_deg, f64::NEG_INFINITY);
            for &(h, u) in &log {
                if u > best_u {
                    best_h = h;
                    best_u = u;
                }
            }
            let n = 360 / self.rotation_deg;
            let cur = ep.run.state.heading_deg / self.rotation_deg;
            let want = best_h / self.rotation_deg;
            let left = (want + n - cur) % n;
            let turns: Vec<Action> = if left <= n - left {
                alloc::vec![Action::RotateLeft; usize::from(left)]
            } else {
                alloc::vec![Action::RotateRight; usize::from(n - left)]
            };
            if !turns.is_empty() {
                self.queue.extend(turns);
                let a = self.queue.pop_front();
                if let Some(a) = a {
                    self.record(ep, Rule::InitialScan, None, None, None, a);
                }
                return a;
            }
        }

        if self.scan_when_idle {
            self.scan_when_idle = false;
            return self.start_scan(ep);
        }

        let state = ep.run.state;
        if ep.map.is_low() {
            ep.map.mark_backtrack();
            if let Some(path) = self.backtrack(ep) {
                self.queue.extend(path);
                let a = self.queue.pop_front()?;
                self.record(ep, Rule::Backtrack, None, None, None, a);
                return Some(a);
            }
            return None;
        }

        let objects: Vec<&str> = ep.ego.objects(self.classes).map(|d| d.class_name.as_str()).collect();
        let has_target = objects.contains(&self.target.as_str());
        let has_relational = ep
            .ego
            .objects(self.classes)
            .any(|d| ep.knowledge.rp(&d.class_name, &self.target).unwrap_or(0.0) > 0.0);
        let has_opening = ep.ego.detections.iter().any(|d| self.classes.is_opening(&d.class_name));
        if ep.map.steps().len() == 1 && !has_target && !has_opening && !has_relational {
            return self.start_scan(ep);
        }

        let view = self.view(ep, &ep.knowledge);
        let mut order: Vec<usize> = (0..view.kept.len()).collect();
        order.sort_by_key(|&i| self.params.rank(i));

        // Opening when the zone relation is low.
        // A frame without objects carries no zone evidence of its own, so the
        // best relation seen while scanning this zone also counts.
        let zone = ep.knowledge.zone_relation(objects.iter().copied(), &self.target);
        let zone_low = zone < self.params.tau_zone && self.zone_evidence.is_none_or(|z| z < self.params.tau_zone);
        if zone_low {
            for &i in &order {
                if !view.kept[i] || !ep.ego.areas[i].flags.has_opening {
                    continue;
                }
                let area = &ep.ego.areas[i];
                let door = area
                    .detections
                    .iter()
                    .map(|&di| &ep.ego.detections[di])
                    .find(|d| self.classes.is_opening(&d.class_name));
                let Some(p) = door.and_then(|d| estimate_position(&state, d, self.classes, self.cell_size_m, self.params.fov_deg)) else {
                    continue;
                };
                let cell = to_cell(p);
                if self.near_reached(cell) || ep.map.is_visited(cell) || ep.map.no_go().contains(&cell) {
                    continue;
                }
                if self.walk_through(&ep.map, state, cell) {
                    self.door = Some(DoorGoal { estimate: cell, current: cell, tried: alloc::vec![cell] });
                    let a = self.queue.pop_front()?;
                    self.record(ep, Rule::Opening, Some(i), Some(&view), Some(cell), a);
                    return Some(a);
                }
                self.reached.insert(cell);
            }
        }

        // Inside a zone left behind, head straight for the nearest frontier
        // elsewhere.
        let retreat = self.left_behind.contains(&state.cell());
        if retreat {
            if let Some((cell, path)) = self.nearest_frontier(ep, false) {
                self.queue.extend(path);
                let a = self.queue.pop_front()?;
                self.record(ep, Rule::FreeSpace, None, Some(&view), Some(cell), a);
                return Some(a);
            }
        }

        // Relational evidence.
        for i in rank_areas(&view.scores, &view.kept, self.params) {
            let Some(goal) = view.goals[i] else { continue };
            let middle = 2 * i + 1 == view.kept.len();
            if middle && ep.map.blocked().contains(&state.ahead()) && !ep.sim.plan().obstacles_at(state.ahead()).is_empty() {
                let no_go = ep.map.no_go().clone();
                let avoid = move |c: Cell| no_go.contains(&c);
                if let Ok(plan) = manhattan_bypass(ep.sim.plan(), &ep.sim.config().action_model, state, self.params.bypass_max_cells, &avoid) {
                    self.queue.extend(plan);
                    let a = self.queue.pop_front()?;
                    self.record(ep, Rule::Bypass, Some(i), Some(&view), Some(goal.cell), a);
                    return Some(a);
                }
            }
            match self.approach(&ep.map, state, goal) {
                Some(path) if !path.is_empty() => {
                    self.reached.insert(goal.cell);
                    self.queue.extend(path);
                    let a = self.queue.pop_front()?;
                    self.record(ep, Rule::Relational, Some(i), Some(&view), Some(goal.cell), a);
                    return Some(a);
                }
                _ => {
                    self.reached.insert(goal.cell);
                }
            }
        }

        // A doorway seen earlier, while nothing here points to the target.
        if zone_low {
            self.prune_doors(&ep.map);
            let mut doors: Vec<Cell> = self.seen_doors.iter().copied().collect();
            doors.sort_by_key(|c| (c.manhattan(state.cell()), *c));
            for cell in doors {
                if self.walk_through(&ep.map, state, cell) {
                    self.door = Some(DoorGoal { estimate: cell, current: cell, tried: alloc::vec![cell] });
                    let a = self.queue.pop_front()?;
                    self.record(ep, Rule::Opening, None, Some(&view), Some(cell), a);
                    return Some(a);
                }
                self.seen_doors.remove(&cell);
            }
        }

        // Free space, preferring cells not yet visited.
        for pass in 0..2 {
            if pass == 1 {
                let mut found = self.nearest_frontier(ep, false);
                if found.is_none() {
                    // Look around here before heading back.
                    if !ep.map.is_fully_scanned(state.cell()) {
                        self.record(ep, Rule::Scan, None, Some(&view), None, Action::RotateLeft);
                        return Some(Action::RotateLeft);
                    }
                    if let Some((cell, path)) = self.nearest_unscanned(ep) {
                        self.queue.extend(path);
                        self.scan_when_idle = true;
                        let a = self.queue.pop_front()?;
                        self.record(ep, Rule::FreeSpace, None, Some(&view), Some(cell), a);
                        return Some(a);
                    }
                    found = self.nearest_frontier(ep, true);
                }
                if let Some((cell, path)) = found {
                    self.queue.extend(path);
                    let a = self.queue.pop_front()?;
                    self.record(ep, Rule::FreeSpace, None, Some(&view), Some(cell), a);
                    return Some(a);
                }
            }
            for &i in &order {
                if !view.kept[i] || !ep.ego.areas[i].flags.has_free_space {
                    continue;
                }
                let cell = self.area_goal_free(state, i);
                if ep.map.blocked().contains(&cell) || ep.map.no_go().contains(&cell) || self.obstacles.contains(&cell) {
                    continue;
                }
                let visits = ep.map.visited().get(&cell).map_or(0, |v| v.visits);
                let ok = if pass == 0 { visits == 0 } else { visits < self.params.revisit_limit };
                if !ok {
                    continue;
                }
                let rel = heading_between_rel(state, cell);
                let turn = if rel > 0 { Action::RotateLeft } else { Action::RotateRight };
                let turns = rel.unsigned_abs() / u32::from(self.rotation_deg);
                self.queue.extend(core::iter::repeat_n(turn, turns as usize));
                self.queue.push_back(Action::Forward);
                let a = self.queue.pop_front()?;
                self.record(ep, Rule::FreeSpace, Some(i), Some(&view), Some(cell), a);
                return Some(a);
            }
        }

        // Nothing to go for here: finish scanning this cell, then backtrack.
        if !ep.map.is_fully_scanned(state.cell()) {
            self.record(ep, Rule::Scan, None, Some(&view), None, Action::RotateLeft);
            return Some(Action::RotateLeft);
        }
        let path = self.backtrack(ep)?;
        ep.map.mark_backtrack();
        self.queue.extend(path);
        let a = self.queue.pop_front()?;
        self.record(ep, Rule::Backtrack, None, Some(&view), None, a);
        Some(a)
    }
}

/// Signed heading change (degrees, positive left) from the robot's heading
/// to the direction of an adjacent cell.
fn heading_between_rel(state: RobotState, cell: Cell) -> i32 {
    let h = crate::world::heading_between(state.cell(), cell).unwrap_or(state.heading_deg);
    let mut d = i32::from(h) - i32::from(state.heading_deg);
    if d > 180 {
        d -= 360;
    } else if d <= -180 {
        d += 360;
    }
    d
}

/// Runs the policy from `start` until the target is found, the map is
/// exhausted, or the action budget runs out. Fully determined by `seed`.
pub fn run_episode(
    sim: &Simulator,
    start: RobotState,
    knowledge: &TripleStore,
    params: &AgentParams,
    landmark: LandmarkParams,
    seed: u64,
) -> Result<EpisodeResult, SimError> {
    let mut ep = Episode::begin(sim, start, knowledge.clone(), landmark, seed)?;
    let mut nav = Navigator {
        params,
        classes: sim.classes(),
        target: sim.target().into(),
        cell_size_m: sim.plan().cell_size_m(),
        rotation_deg: sim.config().action_model.rotation_deg,
        queue: VecDeque::new(),
        scan_log: None,
        scan_when_idle: false,
        door: None,
        reached: BTreeSet::new(),
        obstacles: BTreeSet::new(),
        rejected: Vec::new(),
        left_behind: BTreeSet::new(),
        inside_left: false,
        zone_evidence: None,
        crossing: None,
        seen_doors: BTreeSet::new(),
        decisions: Vec::new(),
    };
    loop {
        if let Some(t) = ep.termination() {
            return Ok(ep.finish(t, nav.decisions));
        }
        let mut vetoes = 0;
        let action = loop {
            let Some(action) = nav.decide(&mut ep) else {
                return Ok(ep.finish(Termination::ScanFull, nav.decisions));
            };
            if action != Action::Forward || nav.safe_ahead(&ep) {
                break action;
            }
            // Unconfirmed cell ahead: treat it as blocked and re-plan.
            ep.map.mark_blocked(ep.run.state.ahead());
            nav.queue.clear();
            nav.scan_log = None;
            nav.scan_when_idle = false;
            if nav.decisions.last().is_some_and(|d| d.step + 1 == ep.map.steps().len()) {
                nav.decisions.pop();
            }
            vetoes += 1;
            if vetoes >= MAX_VETOES {
                break Action::RotateLeft;
            }
        };
        let moved = ep.step(action);
        if !moved {
            nav.queue.clear();
            nav.scan_log = None;
            nav.scan_when_idle = false;
        }
    }
}
