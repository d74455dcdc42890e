//! Relation knowledge learned from scene graphs.
//!
//! Statistics are kept per scene with a weight: corpus scenes weigh 1, scenes
//! observed online weigh `1 / (n + 1)` where `n` is the number of scenes seen
//! before them. Every probability is recomputed on demand from the weighted
//! counts, so online updates never leave stale facts behind.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{exp, hypot};
use crate::perception::{ClassTable, EgoScene};

/// How far above the supporting box's top edge the upper box's bottom edge
/// may sit and still count as resting on it (normalized image units).
pub const ON_TOP_GAP: f64 = 0.05;
/// How deep into the supporting box (as a fraction of its height) the upper
/// box's bottom edge may reach.
pub const ON_TOP_SINK: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    #[serde(rename = "class")]
    pub class_name: String,
    /// Box centre, normalized image coordinates with y growing downwards.
    pub centroid: [f64; 2],
    /// Box width and height.
    #[serde(default)]
    pub size: [f64; 2],
}

impl SceneObject {
    fn top(&self) -> f64 {
        self.centroid[1] - self.size[1] / 2.0
    }

    fn bottom(&self) -> f64 {
        self.centroid[1] + self.size[1] / 2.0
    }

    fn x_range(&self) -> (f64, f64) {
        (self.centroid[0] - self.size[0] / 2.0, self.centroid[0] + self.size[0] / 2.0)
    }

    /// Whether `self` rests on `below` in the image.
    pub fn rests_on(&self, below: &SceneObject) -> bool {
        let top = below.top();
        let b = self.bottom();
        let (l1, r1) = self.x_range();
        let (l2, r2) = below.x_range();
        b >= top - ON_TOP_GAP && b <= top + ON_TOP_SINK * below.size[1] && l1.max(l2) < r1.min(r2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub scene_id: String,
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub zone_label: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    #[default]
    Fixed,
    /// Co-occurrence graph density `|E| / C(|V|, 2)`.
    Density,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// Online scene weight `1 / (scenes so far + 1)`.
    #[default]
    InverseScenes,
    /// Online scenes count like corpus scenes.
    Unit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnowledgeParams {
    pub beta_mode: BetaMode,
    pub beta_fixed: f64,
    /// Distance decay length in normalized image units.
    pub lambda: f64,
    pub gamma_mode: GammaMode,
    /// Co-location gate for occlusion.
    pub tau_co: f64,
}

impl Default for KnowledgeParams {
    fn default() -> Self {
        Self { beta_mode: BetaMode::Fixed, beta_fixed: 1.0, lambda: 0.5, gamma_mode: GammaMode::InverseScenes, tau_co: 0.2 }
    }
}

impl KnowledgeParams {
    pub fn validate(&self) -> Result<(), KnowledgeError> {
        if !(self.lambda > 0.0) {
            return Err(KnowledgeError::BadParams("lambda must be positive"));
        }
        if !(self.beta_fixed > 0.0 && self.beta_fixed <= 1.0) {
            return Err(KnowledgeError::BadParams("beta_fixed must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.tau_co) {
            return Err(KnowledgeError::BadParams("tau_co must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum KnowledgeError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("scene id {0:?} appears more than once")]
    DuplicateScene(String),
    #[error("scene {scene:?}: centroid of {class:?} lies outside the unit square")]
    BadCentroid { scene: String, class: String },
    #[error("invalid parameters: {0}")]
    BadParams(&'static str),
    #[error("class {0:?} has no average dimensions")]
    MissingDims(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassStat {
    pub scenes: u64,
    pub weight: f64,
    pub online: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    pub scenes: u64,
    pub weight: f64,
    /// Sum over co-occurrence scenes of `weight * exp(-d / lambda)`.
    pub decayed: f64,
    /// Weighted count of scenes where the first class rests on the second.
    pub first_on_second: f64,
    /// Weighted count of scenes where the second class rests on the first.
    pub second_on_first: f64,
    pub online: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ZoneStat {
    pub scenes: u64,
    pub weight: f64,
    pub online: bool,
}

/// Weighted scene statistics. Pair keys are ordered `(a, b)` with `a < b`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusStats {
    pub n_scenes: u64,
    pub total_weight: f64,
    pub classes: BTreeMap<String, ClassStat>,
    pub pairs: BTreeMap<(String, String), PairStat>,
    pub zones: BTreeMap<(String, String), ZoneStat>,
}

impl CorpusStats {
    /// Distinct classes and distinct co-occurring pairs.
    pub fn graph_size(&self) -> (usize, usize) {
        (self.classes.len(), self.pairs.len())
    }

    fn add_scene(&mut self, scene: &SceneGraph, weight: f64, lambda: f64, online: bool) {
        self.n_scenes += 1;
        self.total_weight += weight;
        let mut by_class: BTreeMap<&str, Vec<&SceneObject>> = BTreeMap::new();
        for o in &scene.objects {
            by_class.entry(o.class_name.as_str()).or_default().push(o);
        }
        for &c in by_class.keys() {
            let s = self.classes.entry(c.into()).or_default();
            s.scenes += 1;
            s.weight += weight;
            s.online |= online;
            if let Some(z) = &scene.zone_label {
                let s = self.zones.entry((c.into(), z.clone())).or_default();
                s.scenes += 1;
                s.weight += weight;
                s.online |= online;
            }
        }
        let names: Vec<&str> = by_class.keys().copied().collect();
        for (i, &a) in names.iter().enumerate() {
            for &b in &names[i + 1..] {
                let (oa, ob) = (&by_class[a], &by_class[b]);
                let d = oa
                    .iter()
                    .flat_map(|x| ob.iter().map(move |y| hypot(x.centroid[0] - y.centroid[0], x.centroid[1] - y.centroid[1])))
                    .fold(f64::INFINITY, f64::min);
                let a_on_b = oa.iter().any(|x| ob.iter().any(|y| x.rests_on(y)));
                let b_on_a = ob.iter().any(|y| oa.iter().any(|x| y.rests_on(x)));
                let s = self.pairs.entry((a.into(), b.into())).or_default();
                s.scenes += 1;
                s.weight += weight;
                s.decayed += weight * exp(-d / lambda);
                if a_on_b {
                    s.first_on_second += weight;
                }
                if b_on_a {
                    s.second_on_first += weight;
                }
                s.online |= online;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "locatedAt")]
    LocatedAt,
    #[serde(rename = "coLocatedWith")]
    CoLocatedWith,
    #[serde(rename = "locatedOnTopOf")]
    LocatedOnTopOf,
    #[serde(rename = "locatedBelow")]
    LocatedBelow,
    #[serde(rename = "occlusionBy")]
    OcclusionBy,
}

impl Relation {
    pub const ALL: [Relation; 5] = [
        Relation::LocatedAt,
        Relation::CoLocatedWith,
        Relation::LocatedOnTopOf,
        Relation::LocatedBelow,
        Relation::OcclusionBy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::LocatedAt => "locatedAt",
            Relation::CoLocatedWith => "coLocatedWith",
            Relation::LocatedOnTopOf => "locatedOnTopOf",
            Relation::LocatedBelow => "locatedBelow",
            Relation::OcclusionBy => "occlusionBy",
        }
    }

    pub fn parse(s: &str) -> Option<Relation> {
        Relation::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Corpus,
    Online,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Corpus => "corpus",
            Provenance::Online => "online",
        }
    }

    fn of(online: bool) -> Self {
        if online {
            Provenance::Online
        } else {
            Provenance::Corpus
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub relation: Relation,
    pub subject: String,
    pub object: String,
    pub probability: f64,
    /// Weighted number of scenes supporting the fact.
    pub weight: f64,
    pub provenance: Provenance,
}

/// Relation store: learned statistics plus the class vocabulary they are
/// interpreted against.
#[derive(Clone, Debug, PartialEq)]
pub struct TripleStore {
    params: KnowledgeParams,
    vocabulary: BTreeMap<String, [f64; 3]>,
    stats: CorpusStats,
}

fn ordered<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Builds a store from a scene-graph corpus.
pub fn ingest_corpus(
    graphs: &[SceneGraph],
    params: KnowledgeParams,
    classes: &ClassTable,
) -> Result<TripleStore, KnowledgeError> {
    if graphs.is_empty() {
        return Err(KnowledgeError::EmptyCorpus);
    }
    let mut store = TripleStore::empty(params, classes)?;
    let mut ids = BTreeSet::new();
    for g in graphs {
        if !ids.insert(g.scene_id.as_str()) {
            return Err(KnowledgeError::DuplicateScene(g.scene_id.clone()));
        }
        for o in &g.objects {
            if classes.get(&o.class_name).is_none() {
                return Err(KnowledgeError::UnknownClass(o.class_name.clone()));
            }
            if !o.centroid.iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(KnowledgeError::BadCentroid { scene: g.scene_id.clone(), class: o.class_name.clone() });
            }
        }
        store.stats.add_scene(g, 1.0, params.lambda, false);
    }
    Ok(store)
}

impl TripleStore {
    pub fn empty(params: KnowledgeParams, classes: &ClassTable) -> Result<Self, KnowledgeError> {
        params.validate()?;
        Ok(Self { params, vocabulary: classes.vocabulary(), stats: CorpusStats::default() })
    }

    /// Reassembles a store from previously exported parts.
    pub fn from_parts(
        params: KnowledgeParams,
        vocabulary: BTreeMap<String, [f64; 3]>,
        stats: CorpusStats,
    ) -> Result<Self, KnowledgeError> {
        params.validate()?;
        for c in stats.classes.keys() {
            if !vocabulary.contains_key(c) {
                return Err(KnowledgeError::UnknownClass(c.clone()));
            }
        }
        Ok(Self { params, vocabulary, stats })
    }

    pub fn params(&self) -> &KnowledgeParams {
        &self.params
    }

    pub fn vocabulary(&self) -> &BTreeMap<String, [f64; 3]> {
        &self.vocabulary
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }

    fn known(&self, c: &str) -> Result<(), KnowledgeError> {
        if self.vocabulary.contains_key(c) {
            Ok(())
        } else {
            Err(KnowledgeError::UnknownClass(c.into()))
        }
    }

    /// Scale factor applied to every relation probability.
    pub fn beta(&self) -> f64 {
        match self.params.beta_mode {
            BetaMode::Fixed => self.params.beta_fixed,
            BetaMode::Density => {
                let (v, e) = self.stats.graph_size();
                if v < 2 || e == 0 {
                    1.0
                } else {
                    let possible = (v * (v - 1) / 2) as f64;
                    (e as f64 / possible).min(1.0)
                }
            }
        }
    }

    fn class_weight(&self, c: &str) -> f64 {
        self.stats.classes.get(c).map_or(0.0, |s| s.weight)
    }

    fn pair(&self, a: &str, b: &str) -> Option<&PairStat> {
        let (x, y) = ordered(a, b);
        self.stats.pairs.get(&(x.into(), y.into()))
    }

    /// Co-location probability: distance-decayed co-occurrence over the
    /// weighted number of scenes holding either class (at least 1), times beta.
    pub fn rp(&self, a: &str, b: &str) -> Result<f64, KnowledgeError> {
        self.known(a)?;
        self.known(b)?;
        if a == b {
            return Ok(1.0);
        }
        let Some(p) = self.pair(a, b) else { return Ok(0.0) };
        let union = (self.class_weight(a) + self.class_weight(b) - p.weight).max(1.0);
        Ok((self.beta() * p.decayed / union).clamp(0.0, 1.0))
    }

    pub fn located_at(&self, obj: &str, zone: &str) -> Result<f64, KnowledgeError> {
        self.known(obj)?;
        let total = self.class_weight(obj).max(1.0);
        let here = self.stats.zones.get(&(obj.into(), zone.into())).map_or(0.0, |z| z.weight);
        Ok((here / total).min(1.0))
    }

    /// Fraction of co-occurrence scenes in which `a` rests on `b`.
    pub fn on_top_of(&self, a: &str, b: &str) -> Result<f64, KnowledgeError> {
        self.known(a)?;
        self.known(b)?;
        if a == b {
            return Ok(0.0);
        }
        let Some(p) = self.pair(a, b) else { return Ok(0.0) };
        if p.weight <= 0.0 {
            return Ok(0.0);
        }
        let hits = if a <= b { p.first_on_second } else { p.second_on_first };
        Ok((hits / p.weight).min(1.0))
    }

    pub fn located_below(&self, a: &str, b: &str) -> Result<f64, KnowledgeError> {
        self.on_top_of(b, a)
    }

    /// How fully `blocker` can hide `target`, gated by co-location.
    pub fn occlusion_by(&self, target: &str, blocker: &str) -> Result<f64, KnowledgeError> {
        if self.rp(target, blocker)? < self.params.tau_co {
            return Ok(0.0);
        }
        let area = |c: &str| -> Result<f64, KnowledgeError> {
            let d = self.vocabulary.get(c).ok_or_else(|| KnowledgeError::MissingDims(c.into()))?;
            let a = d[0] * d[1];
            if a > 0.0 {
                Ok(a)
            } else {
                Err(KnowledgeError::MissingDims(c.into()))
            }
        };
        Ok((area(blocker)? / area(target)?).min(1.0))
    }

    /// Zone the detections most plausibly belong to, by summed `located_at` votes.
    pub fn infer_zone<'a>(&self, detections: impl IntoIterator<Item = &'a str>) -> Option<String> {
        let mut votes: BTreeMap<&str, f64> = BTreeMap::new();
        for d in detections {
            for ((c, z), _) in self.stats.zones.range((String::from(d), String::new())..) {
                if c != d {
                    break;
                }
                *votes.entry(z.as_str()).or_default() += self.located_at(d, z).unwrap_or(0.0);
            }
        }
        let mut best: Option<(&str, f64)> = None;
        for (z, v) in votes {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((z, v));
            }
        }
        best.filter(|&(_, v)| v > 0.0).map(|(z, _)| z.into())
    }

    /// Probability of the target in the zone inferred from the detections;
    /// 0 when there is no evidence for any zone.
    pub fn zone_relation<'a>(&self, detections: impl IntoIterator<Item = &'a str>, target: &str) -> f64 {
        match self.infer_zone(detections) {
            Some(z) => self.located_at(target, &z).unwrap_or(0.0),
            None => 0.0,
        }
    }

    /// Next online scene weight.
    pub fn gamma(&self) -> f64 {
        match self.params.gamma_mode {
            GammaMode::InverseScenes => 1.0 / (self.stats.n_scenes as f64 + 1.0),
            GammaMode::Unit => 1.0,
        }
    }

    /// Folds an observed frame into the statistics as a weighted scene.
    /// Scene-structure and unknown classes are skipped.
    pub fn update_relations(&mut self, ego: &EgoScene, zone_guess: Option<&str>, classes: &ClassTable) {
        let objects = ego
            .objects(classes)
            .filter(|d| self.vocabulary.contains_key(&d.class_name))
            .map(|d| SceneObject {
                class_name: d.class_name.clone(),
                centroid: [d.bbox.centre_x(), d.bbox.centre_y()],
                size: [d.bbox.width(), d.bbox.height()],
            })
            .collect();
        let scene = SceneGraph { scene_id: String::new(), objects, zone_label: zone_guess.map(String::from) };
        self.add_online_scene(&scene);
    }

    pub fn add_online_scene(&mut self, scene: &SceneGraph) {
        let w = self.gamma();
        self.stats.add_scene(scene, w, self.params.lambda, true);
    }

    /// Every derived fact, in export order.
    pub fn facts(&self) -> Vec<Fact> {
        let mut out = Vec::new();
        for ((c, z), s) in &self.stats.zones {
            out.push(Fact {
                relation: Relation::LocatedAt,
                subject: c.clone(),
                object: z.clone(),
                probability: self.located_at(c, z).unwrap_or(0.0),
                weight: s.weight,
                provenance: Provenance::of(s.online),
            });
        }
        for ((a, b), s) in &self.stats.pairs {
            let src = Provenance::of(s.online);
            let fact = |relation, subject: &str, object: &str, probability, weight| Fact {
                relation,
                subject: subject.into(),
                object: object.into(),
                probability,
                weight,
                provenance: src,
            };
            out.push(fact(Relation::CoLocatedWith, a, b, self.rp(a, b).unwrap_or(0.0), s.weight));
            for (top, base, hits) in [(a, b, s.first_on_second), (b, a, s.second_on_first)] {
                if hits > 0.0 {
                    let p = self.on_top_of(top, base).unwrap_or(0.0);
                    out.push(fact(Relation::LocatedOnTopOf, top, base, p, hits));
                    out.push(fact(Relation::LocatedBelow, base, top, p, hits));
                }
            }
            for (t, blk) in [(a, b), (b, a)] {
                let p = self.occlusion_by(t, blk).unwrap_or(0.0);
                if p > 0.0 {
                    out.push(fact(Relation::OcclusionBy, t, blk, p, s.weight));
                }
            }
        }
        out.sort_by(|x, y| {
            (x.relation.as_str(), &x.subject, &x.object).cmp(&(y.relation.as_str(), &y.subject, &y.object))
        });
        out
    }
}
