//! Simulated scene processing.
//!
//! [`render_ego`] turns ground-truth visibility into ideal detections in
//! normalized image space, [`detect`] applies the fast detector's noise model
//! with a robust fallback tier, and [`segment_areas`] splits the frame into
//! vertical areas carrying free-space, obstacle, opening, restriction and
//! passage flags.

mod classes;

pub use classes::{ClassInfo, ClassTable, ClassTableError, Tag, CEILING, DOOR, FLOOR, OPENING, WALL};
#[cfg(test)]
pub(crate) use classes::test_table;

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::math::wrap_deg;
use crate::world::{march, visible_entities, Camera, Floorplan, RobotState};

/// Image-height scale: a box's height is `FOCAL * height_m / distance_m`.
pub const FOCAL: f64 = 0.5;
/// Rays cast across the field of view to synthesize scene-structure detections.
pub const SCENE_RAYS: usize = 30;
/// A ray counts as floor when it travels at least this far (cells) before hitting anything.
pub const FLOOR_MIN_RUN: f64 = 1.5;
/// Restricted floor closer than this (cells) is reported as a restricted floor detection.
pub const RESTRICTED_WARN_CELLS: f64 = 1.0;
/// Fraction of an area that floor (or wall) detections must cover to flag it.
pub const BAND_COVER_FRACTION: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn centre_x(&self) -> f64 {
        (self.x_min + self.x_max) / 2.0
    }

    pub fn centre_y(&self) -> f64 {
        (self.y_min + self.y_max) / 2.0
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn overlap_x(&self, lo: f64, hi: f64) -> f64 {
        (self.x_max.min(hi) - self.x_min.max(lo)).max(0.0)
    }

    fn is_valid(&self) -> bool {
        0.0 <= self.x_min && self.x_min < self.x_max && self.x_max <= 1.0 && 0.0 <= self.y_min && self.y_min < self.y_max && self.y_max <= 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_name: String,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: BBox,
    /// Set for instances flagged restricted in the world or of a restricted class.
    #[serde(default)]
    pub restricted: bool,
}

impl Detection {
    /// Bearing of the box centre relative to the heading (positive left).
    pub fn bearing_deg(&self, fov_deg: f64) -> f64 {
        (0.5 - self.bbox.centre_x()) * fov_deg
    }

    /// Range estimate in cells from apparent height and the class's average height.
    pub fn estimated_distance(&self, classes: &ClassTable, cell_size_m: f64) -> Option<f64> {
        let h = classes.get(&self.class_name)?.avg_dims_m[1];
        Some(FOCAL * h / (self.bbox.height() * cell_size_m))
    }
}

/// Ideal detections for one pose, before detector noise.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TruthScene {
    pub detections: Vec<Detection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Fast,
    Fallback,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AreaFlags {
    pub has_free_space: bool,
    pub has_obstacle: bool,
    pub has_opening: bool,
    pub has_restricted: bool,
    pub is_passage: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneArea {
    pub index: usize,
    /// Half-open horizontal extent `[lo, hi)`.
    pub x_extent: [f64; 2],
    /// Indices into [`EgoScene::detections`].
    pub detections: Vec<usize>,
    pub flags: AreaFlags,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoScene {
    pub detections: Vec<Detection>,
    pub areas: Vec<SceneArea>,
    pub produced_by: Tier,
    pub processing_latency_s: f64,
}

impl EgoScene {
    pub fn contains_class(&self, class: &str) -> bool {
        self.detections.iter().any(|d| d.class_name == class)
    }

    /// Detections that are not scene structure.
    pub fn objects<'a>(&'a self, classes: &'a ClassTable) -> impl Iterator<Item = &'a Detection> + 'a {
        self.detections.iter().filter(move |d| !classes.is_extension(&d.class_name))
    }

    pub fn area_of(&self, detection: usize) -> Option<usize> {
        self.areas.iter().position(|a| a.detections.contains(&detection))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorModel {
    /// Per-object miss probability of the fast tier.
    pub p_miss: f64,
    pub confidence_noise_sd: f64,
    pub latency_s: f64,
    /// Latency of the robust tier; it never misses.
    pub fallback_latency_s: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self { p_miss: 0.1, confidence_noise_sd: 0.05, latency_s: 0.033, fallback_latency_s: 0.5 }
    }
}

impl DetectorModel {
    pub fn noiseless() -> Self {
        Self { p_miss: 0.0, confidence_noise_sd: 0.0, ..Self::default() }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.p_miss)
            && self.confidence_noise_sd >= 0.0
            && self.latency_s > 0.0
            && self.fallback_latency_s > self.latency_s
    }
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn box_from_extent(left_deg: f64, right_deg: f64, fov: f64, height: f64) -> BBox {
    let mut x_min = clamp01(0.5 - left_deg / fov);
    let mut x_max = clamp01(0.5 - right_deg / fov);
    if x_max - x_min < 0.01 {
        let c = ((x_min + x_max) / 2.0).clamp(0.005, 0.995);
        x_min = c - 0.005;
        x_max = c + 0.005;
    }
    let h = height.clamp(0.01, 1.0);
    BBox { x_min, x_max, y_min: 0.5 - h / 2.0, y_max: 0.5 + h / 2.0 }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum RayEnd {
    Wall,
    Obstacle,
    Open,
}

#[derive(Clone, Copy, Debug)]
struct RayProbe {
    free_run: f64,
    end: RayEnd,
    door_at: Option<f64>,
    restricted_at: Option<f64>,
}

fn probe(state: &RobotState, plan: &Floorplan, angle_deg: f64, range: f64) -> RayProbe {
    let mut out = RayProbe { free_run: range, end: RayEnd::Open, door_at: None, restricted_at: None };
    let here = state.cell();
    march((f64::from(state.x), f64::from(state.y)), angle_deg, range, |cell, t| {
        if plan.is_wall(cell) {
            out = RayProbe { free_run: t, end: RayEnd::Wall, ..out };
            return false;
        }
        if out.restricted_at.is_none() && plan.is_restricted_cell(cell) {
            out.restricted_at = Some(t);
        }
        if cell != here && !plan.obstacles_at(cell).is_empty() {
            out = RayProbe { free_run: t, end: RayEnd::Obstacle, ..out };
            return false;
        }
        if out.door_at.is_none() && plan.is_door(cell) {
            out.door_at = Some(t);
        }
        true
    });
    out
}

/// Contiguous index runs `[start, end]` where `pred` holds.
fn runs(n: usize, pred: impl Fn(usize) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for k in 0..=n {
        let on = k < n && pred(k);
        match (on, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((s, k - 1));
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Ideal egocentric detections.
///
/// Objects map to boxes spanning their angular extent (bearing maps linearly
/// to image x, left of centre is x < 0.5) with apparent height inversely
/// proportional to distance and confidence `1 - occluded_fraction`.
/// Floor, wall and door detections come from rays cast across the view; a
/// ceiling band is always present.
pub fn render_ego(state: &RobotState, plan: &Floorplan, camera: &Camera, classes: &ClassTable) -> TruthScene {
    let fov = camera.fov_deg;
    let cell_m = plan.cell_size_m();
    let apparent = |class: &str, dist: f64| {
        let h = classes.get(class).map_or(1.0, |c| c.avg_dims_m[1]);
        FOCAL * h / (dist.max(0.5) * cell_m)
    };
    let mut detections = Vec::new();
    for s in visible_entities(state, plan, camera) {
        let obj = &plan.objects()[s.object];
        let (left, right) = s.extent_deg;
        detections.push(Detection {
            class_name: obj.class_name.clone(),
            confidence: 1.0 - s.occluded_fraction,
            bbox: box_from_extent(left, right, fov, apparent(&obj.class_name, s.distance)),
            restricted: obj.restricted || classes.is_restricted(&obj.class_name),
        });
    }

    let half = fov / 2.0;
    let step = fov / SCENE_RAYS as f64;
    let probes: Vec<RayProbe> = (0..SCENE_RAYS)
        .map(|k| {
            let bearing = half - (k as f64 + 0.5) * step;
            probe(state, plan, f64::from(state.heading_deg) + bearing, camera.range_cells)
        })
        .collect();
    let x_of = |k: usize| k as f64 / SCENE_RAYS as f64;
    let mean = |a: usize, b: usize, f: &dyn Fn(&RayProbe) -> f64| {
        (a..=b).map(|k| f(&probes[k])).sum::<f64>() / (b - a + 1) as f64
    };
    let structure = |class: &str, a: usize, b: usize, y: (f64, f64)| Detection {
        class_name: class.into(),
        confidence: 1.0,
        bbox: BBox { x_min: x_of(a), x_max: x_of(b + 1), y_min: y.0, y_max: y.1 },
        restricted: classes.is_restricted(class),
    };

    for (a, b) in runs(SCENE_RAYS, |k| probes[k].free_run >= FLOOR_MIN_RUN) {
        detections.push(structure(FLOOR, a, b, (0.6, 1.0)));
    }
    for (a, b) in runs(SCENE_RAYS, |k| probes[k].end == RayEnd::Wall) {
        let d = mean(a, b, &|p| p.free_run);
        let h = apparent(WALL, d).clamp(0.01, 1.0);
        detections.push(structure(WALL, a, b, (0.5 - h / 2.0, 0.5 + h / 2.0)));
    }
    for (a, b) in runs(SCENE_RAYS, |k| probes[k].door_at.is_some()) {
        let d = mean(a, b, &|p| p.door_at.unwrap_or(0.0)) + 0.5;
        let h = apparent(DOOR, d).clamp(0.01, 1.0);
        detections.push(structure(DOOR, a, b, (0.5 - h / 2.0, 0.5 + h / 2.0)));
    }
    for (a, b) in runs(SCENE_RAYS, |k| probes[k].restricted_at.is_some_and(|t| t <= RESTRICTED_WARN_CELLS)) {
        detections.push(Detection { restricted: true, ..structure(FLOOR, a, b, (0.6, 1.0)) });
    }
    detections.push(structure(CEILING, 0, SCENE_RAYS - 1, (0.0, 0.08)));
    debug_assert!(detections.iter().all(|d| d.bbox.is_valid()));
    TruthScene { detections }
}

/// Runs the two-tier detector on an ideal scene.
///
/// The fast tier drops each object detection independently with `p_miss` and
/// perturbs its confidence with clamped Gaussian noise. Scene-structure
/// detections pass through untouched. When the fast tier reports no objects
/// but the truth holds at least one, the fallback tier returns the full truth
/// at extra latency.
pub fn detect(truth: &TruthScene, model: &DetectorModel, seed: u64, classes: &ClassTable) -> EgoScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = Vec::with_capacity(truth.detections.len());
    let mut truth_objects = 0usize;
    let mut kept_objects = 0usize;
    for d in &truth.detections {
        if classes.is_extension(&d.class_name) {
            kept.push(d.clone());
            continue;
        }
        truth_objects += 1;
        let u: f64 = rng.random();
        let z: f64 = rng.sample(StandardNormal);
        if u < model.p_miss {
            continue;
        }
        kept_objects += 1;
        let mut d = d.clone();
        d.confidence = clamp01(d.confidence + z * model.confidence_noise_sd);
        kept.push(d);
    }
    if kept_objects == 0 && truth_objects > 0 {
        return EgoScene {
            detections: truth.detections.clone(),
            areas: Vec::new(),
            produced_by: Tier::Fallback,
            processing_latency_s: model.latency_s + model.fallback_latency_s,
        };
    }
    EgoScene { detections: kept, areas: Vec::new(), produced_by: Tier::Fast, processing_latency_s: model.latency_s }
}

/// Splits the frame into `k` equal vertical bands and computes their flags.
///
/// Detections belong to the band holding their box centre. Free space and
/// passage use floor/wall coverage of the band by any structure detection,
/// since those detections span several bands.
pub fn segment_areas(mut scene: EgoScene, k: usize, classes: &ClassTable) -> EgoScene {
    let k = k.max(1);
    let width = 1.0 / k as f64;
    let mut areas: Vec<SceneArea> = (0..k)
        .map(|i| SceneArea {
            index: i,
            x_extent: [i as f64 * width, if i + 1 == k { 1.0 } else { (i + 1) as f64 * width }],
            detections: Vec::new(),
            flags: AreaFlags::default(),
        })
        .collect();
    for (di, d) in scene.detections.iter().enumerate() {
        let band = ((d.bbox.centre_x() * k as f64) as usize).min(k - 1);
        areas[band].detections.push(di);
    }
    let cover = |class: &str, a: &SceneArea| {
        scene
            .detections
            .iter()
            .filter(|d| d.class_name == class)
            .map(|d| d.bbox.overlap_x(a.x_extent[0], a.x_extent[1]))
            .sum::<f64>()
            / (a.x_extent[1] - a.x_extent[0])
    };
    let floor: Vec<bool> = areas.iter().map(|a| cover(FLOOR, a) >= BAND_COVER_FRACTION).collect();
    let wall: Vec<bool> = areas.iter().map(|a| cover(WALL, a) >= BAND_COVER_FRACTION).collect();
    for (i, a) in areas.iter_mut().enumerate() {
        let members = a.detections.iter().map(|&di| &scene.detections[di]);
        let mut flags = AreaFlags { has_free_space: floor[i], ..AreaFlags::default() };
        for d in members {
            let name = d.class_name.as_str();
            flags.has_obstacle |= classes.has_tag(name, Tag::Obstacle) && !classes.is_extension(name);
            flags.has_opening |= classes.is_opening(name);
            flags.has_restricted |= d.restricted;
        }
        flags.is_passage = floor[i] && i > 0 && i + 1 < k && wall[i - 1] && wall[i + 1];
        a.flags = flags;
    }
    scene.areas = areas;
    scene
}

/// Band label for the default three-way split.
pub fn area_name(index: usize, k: usize) -> &'static str {
    match (k, index) {
        (3, 0) => "Left",
        (3, 1) => "Middle",
        (3, 2) => "Right",
        _ => "Area",
    }
}

/// Bearing at the centre of band `index` of `k` (positive left).
pub fn area_bearing_deg(index: usize, k: usize, fov_deg: f64) -> f64 {
    wrap_deg(fov_deg / 2.0 - (index as f64 + 0.5) * fov_deg / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{test_doc, BodyDims, HeightClass, ObjectDoc};
    use alloc::vec;

    fn table() -> ClassTable {
        classes::test_table()
    }

    fn obj(class: &str, at: [i32; 2]) -> ObjectDoc {
        ObjectDoc {
            class: class.into(),
            anchor: at,
            footprint: vec![],
            height_class: HeightClass::Surface,
            on_top_of: None,
            restricted: false,
            obstacle: false,
        }
    }

    fn det(class: &str, cx: f64) -> Detection {
        Detection {
            class_name: class.into(),
            confidence: 0.9,
            bbox: BBox { x_min: cx - 0.01, x_max: cx + 0.01, y_min: 0.4, y_max: 0.6 },
            restricted: false,
        }
    }

    fn scene(dets: Vec<Detection>) -> EgoScene {
        EgoScene { detections: dets, areas: vec![], produced_by: Tier::Fast, processing_latency_s: 0.0 }
    }

    #[test]
    fn corridor_has_floor_and_side_walls() {
        let plan = crate::world::Floorplan::from_doc(&test_doc(&["#########", ".........", "#########"])).unwrap();
        let s = RobotState::new(0, 1, 0, BodyDims::default());
        let truth = render_ego(&s, &plan, &Camera::default(), &table());
        let floors: Vec<_> = truth.detections.iter().filter(|d| d.class_name == FLOOR).collect();
        assert_eq!(floors.len(), 1);
        assert!((floors[0].bbox.centre_x() - 0.5).abs() < 1e-9);
        // Side walls are in view on both flanks.
        let walls: Vec<_> = truth.detections.iter().filter(|d| d.class_name == WALL).collect();
        assert!(walls.iter().any(|w| w.bbox.x_min == 0.0));
        assert!(walls.iter().any(|w| w.bbox.x_max == 1.0));

        let seg = segment_areas(detect(&truth, &DetectorModel::noiseless(), 0, &table()), 3, &table());
        assert!(seg.areas[1].flags.is_passage);
        assert!(seg.areas[1].flags.has_free_space);
        assert!(!seg.areas[0].flags.has_free_space);
    }

    #[test]
    fn bearing_maps_linearly_to_x() {
        let mut d = test_doc(&[".........", ".........", ".........", ".........", "........."]);
        d.objects.push(obj("cup", [6, 2]));
        let plan = crate::world::Floorplan::from_doc(&d).unwrap();
        let s = RobotState::new(0, 2, 0, BodyDims::default());
        let truth = render_ego(&s, &plan, &Camera::default(), &table());
        let cup = truth.detections.iter().find(|d| d.class_name == "cup").unwrap();
        assert!((cup.bbox.centre_x() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn symmetric_bearings_map_to_thirds() {
        // Objects far enough that their extent is thin, at bearings of about +/-20 deg.
        let w = 60;
        let rows: Vec<alloc::string::String> = (0..41).map(|_| ".".repeat(w)).collect();
        let rows: Vec<&str> = rows.iter().map(|r| r.as_str()).collect();
        let mut d = test_doc(&rows);
        // tan(20 deg) * 55 = 20.02
        d.objects.push(obj("cup", [55, 40]));
        d.objects.push(obj("bottle", [55, 0]));
        let plan = crate::world::Floorplan::from_doc(&d).unwrap();
        let s = RobotState::new(0, 20, 0, BodyDims::default());
        let cam = Camera { fov_deg: 60.0, range_cells: 100.0 };
        let truth = render_ego(&s, &plan, &cam, &table());
        let x = |c: &str| truth.detections.iter().find(|d| d.class_name == c).unwrap().bbox.centre_x();
        // +20 deg is to the left of centre.
        assert!((x("cup") - 1.0 / 6.0).abs() < 0.005, "{}", x("cup"));
        assert!((x("bottle") - 5.0 / 6.0).abs() < 0.005, "{}", x("bottle"));
    }

    #[test]
    fn detector_tiers() {
        let truth = TruthScene { detections: vec![det("cup", 0.5), det("floor", 0.5), det("bottle", 0.2)] };
        let t = table();
        let clean = detect(&truth, &DetectorModel::noiseless(), 7, &t);
        assert_eq!(clean.detections, truth.detections);
        assert_eq!(clean.produced_by, Tier::Fast);

        let blind = DetectorModel { p_miss: 1.0, ..DetectorModel::default() };
        let fb = detect(&truth, &blind, 7, &t);
        assert_eq!(fb.produced_by, Tier::Fallback);
        assert_eq!(fb.detections, truth.detections);
        assert!((fb.processing_latency_s - (blind.latency_s + blind.fallback_latency_s)).abs() < 1e-12);

        let only_floor = TruthScene { detections: vec![det("floor", 0.5)] };
        let r = detect(&only_floor, &blind, 1, &t);
        assert_eq!(r.produced_by, Tier::Fast);
        assert_eq!(r.detections.len(), 1);
    }

    #[test]
    fn noise_stays_in_unit_interval() {
        let truth = TruthScene { detections: vec![det("cup", 0.5)] };
        let noisy = DetectorModel { p_miss: 0.0, confidence_noise_sd: 5.0, ..DetectorModel::default() };
        for seed in 0..50 {
            let c = detect(&truth, &noisy, seed, &table()).detections[0].confidence;
            assert!((0.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn assignment_by_centroid() {
        let s = segment_areas(scene(vec![det("cup", 0.5), det("chair", 0.1), det("door", 0.9)]), 3, &table());
        assert_eq!(s.areas[1].detections, vec![0]);
        assert_eq!(s.areas[0].detections, vec![1]);
        assert!(s.areas[0].flags.has_obstacle);
        assert!(s.areas[2].flags.has_opening);
        assert_eq!(s.area_of(2), Some(2));
        assert_eq!(area_name(1, 3), "Middle");
    }

    #[test]
    fn passage_from_wall_floor_wall() {
        let band = |class: &str, lo: f64, hi: f64| Detection {
            class_name: class.into(),
            confidence: 1.0,
            bbox: BBox { x_min: lo, x_max: hi, y_min: 0.6, y_max: 1.0 },
            restricted: false,
        };
        let s = segment_areas(
            scene(vec![band("wall", 0.0, 1.0 / 3.0), band("floor", 1.0 / 3.0, 2.0 / 3.0), band("wall", 2.0 / 3.0, 1.0)]),
            3,
            &table(),
        );
        assert!(s.areas[1].flags.is_passage);
        assert!(!s.areas[0].flags.is_passage && !s.areas[2].flags.is_passage);
    }

    #[test]
    fn restricted_instance_flag() {
        let mut d = test_doc(&["......", "......", "......"]);
        let mut o = obj("cup", [3, 1]);
        o.restricted = true;
        d.objects.push(o);
        let plan = crate::world::Floorplan::from_doc(&d).unwrap();
        let s = RobotState::new(0, 1, 0, BodyDims::default());
        let t = table();
        let seg = segment_areas(detect(&render_ego(&s, &plan, &Camera::default(), &t), &DetectorModel::noiseless(), 0, &t), 3, &t);
        assert!(seg.areas[1].flags.has_restricted);
        assert!(!seg.areas[0].flags.has_restricted);
    }

    #[test]
    fn distance_estimate_inverts_render() {
        let mut d = test_doc(&["..........", "..........", ".........."]);
        d.objects.push(obj("chair", [5, 1]));
        let plan = crate::world::Floorplan::from_doc(&d).unwrap();
        let s = RobotState::new(1, 1, 0, BodyDims::default());
        let t = table();
        let truth = render_ego(&s, &plan, &Camera::default(), &t);
        let chair = truth.detections.iter().find(|d| d.class_name == "chair").unwrap();
        let est = chair.estimated_distance(&t, plan.cell_size_m()).unwrap();
        assert!((est - 4.0).abs() < 1e-9, "{est}");
    }
}
