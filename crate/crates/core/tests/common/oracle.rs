//! Brute-force recount of the relation store and the generators it is
//! checked on.

use proptest::prelude::*;
use semnav_core::knowledge::{ingest_corpus, BetaMode, KnowledgeParams, SceneGraph, SceneObject, TripleStore};

pub const CLASSES: usize = 8;
pub const ZONES: [&str; 3] = ["z0", "z1", "z2"];

pub fn name(i: usize) -> String {
    format!("c{i}")
}

pub fn object() -> impl Strategy<Value = SceneObject> {
    (0..CLASSES, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..0.4f64, 0.0..0.4f64)
        .prop_map(|(c, x, y, w, h)| SceneObject { class_name: name(c), centroid: [x, y], size: [w, h] })
}

pub fn scene() -> impl Strategy<Value = (Vec<SceneObject>, Option<usize>)> {
    (prop::collection::vec(object(), 0..7), prop::option::of(0..ZONES.len()))
}

pub fn graphs(raw: Vec<(Vec<SceneObject>, Option<usize>)>, prefix: &str) -> Vec<SceneGraph> {
    raw.into_iter()
        .enumerate()
        .map(|(i, (objects, z))| SceneGraph {
            scene_id: format!("{prefix}{i}"),
            objects,
            zone_label: z.map(|z| ZONES[z].to_string()),
        })
        .collect()
}

/// Straightforward per-scene recount of every relation.
pub struct Oracle {
    scenes: Vec<(f64, SceneGraph)>,
    lambda: f64,
    beta: f64,
}

pub fn rests(a: &SceneObject, b: &SceneObject) -> bool {
    let bottom_a = a.centroid[1] + a.size[1] / 2.0;
    let top_b = b.centroid[1] - b.size[1] / 2.0;
    let vertical = bottom_a >= top_b - 0.05 && bottom_a <= top_b + 0.5 * b.size[1];
    let left = (a.centroid[0] - a.size[0] / 2.0).max(b.centroid[0] - b.size[0] / 2.0);
    let right = (a.centroid[0] + a.size[0] / 2.0).min(b.centroid[0] + b.size[0] / 2.0);
    vertical && left < right
}

impl Oracle {
    pub fn new(corpus: &[SceneGraph], online: &[SceneGraph], params: &KnowledgeParams) -> Self {
        let mut scenes: Vec<(f64, SceneGraph)> = corpus.iter().map(|g| (1.0, g.clone())).collect();
        for g in online {
            let w = 1.0 / (scenes.len() as f64 + 1.0);
            scenes.push((w, g.clone()));
        }
        let beta = match params.beta_mode {
            BetaMode::Fixed => params.beta_fixed,
            BetaMode::Density => {
                let mut vertices = std::collections::BTreeSet::new();
                let mut edges = std::collections::BTreeSet::new();
                for (_, g) in &scenes {
                    for a in &g.objects {
                        vertices.insert(a.class_name.clone());
                        for b in &g.objects {
                            if a.class_name < b.class_name {
                                edges.insert((a.class_name.clone(), b.class_name.clone()));
                            }
                        }
                    }
                }
                let v = vertices.len();
                if v < 2 || edges.is_empty() {
                    1.0
                } else {
                    (edges.len() as f64 / (v * (v - 1) / 2) as f64).min(1.0)
                }
            }
        };
        Self { scenes, lambda: params.lambda, beta }
    }

    fn of<'a>(g: &'a SceneGraph, c: &'a str) -> impl Iterator<Item = &'a SceneObject> + 'a {
        g.objects.iter().filter(move |o| o.class_name == c)
    }

    fn has(g: &SceneGraph, c: &str) -> bool {
        Self::of(g, c).next().is_some()
    }

    pub fn rp(&self, a: &str, b: &str) -> f64 {
        if a == b {
            return 1.0;
        }
        let (mut num, mut either) = (0.0, 0.0);
        for (w, g) in &self.scenes {
            let (ha, hb) = (Self::has(g, a), Self::has(g, b));
            if ha || hb {
                either += w;
            }
            if ha && hb {
                let mut d = f64::INFINITY;
                for x in Self::of(g, a) {
                    for y in Self::of(g, b) {
                        let dx = x.centroid[0] - y.centroid[0];
                        let dy = x.centroid[1] - y.centroid[1];
                        d = d.min((dx * dx + dy * dy).sqrt());
                    }
                }
                num += w * (-d / self.lambda).exp();
            }
        }
        (self.beta * num / either.max(1.0)).min(1.0)
    }

    pub fn located_at(&self, c: &str, z: &str) -> f64 {
        let (mut here, mut all) = (0.0, 0.0);
        for (w, g) in &self.scenes {
            if Self::has(g, c) {
                all += w;
                if g.zone_label.as_deref() == Some(z) {
                    here += w;
                }
            }
        }
        here / all.max(1.0)
    }

    pub fn on_top_of(&self, a: &str, b: &str) -> f64 {
        if a == b {
            return 0.0;
        }
        let (mut hits, mut both) = (0.0, 0.0);
        for (w, g) in &self.scenes {
            if Self::has(g, a) && Self::has(g, b) {
                both += w;
                if Self::of(g, a).any(|x| Self::of(g, b).any(|y| rests(x, y))) {
                    hits += w;
                }
            }
        }
        if both == 0.0 {
            0.0
        } else {
            hits / both
        }
    }
}

pub fn params() -> impl Strategy<Value = KnowledgeParams> {
    (prop::bool::ANY, 0.1..=1.0f64, 0.05..2.0f64).prop_map(|(density, beta_fixed, lambda)| KnowledgeParams {
        beta_mode: if density { BetaMode::Density } else { BetaMode::Fixed },
        beta_fixed,
        lambda,
        ..KnowledgeParams::default()
    })
}

pub fn build(corpus: &[SceneGraph], online: &[SceneGraph], p: KnowledgeParams) -> TripleStore {
    let mut store = ingest_corpus(corpus, p, &super::classes()).unwrap();
    for g in online {
        store.add_online_scene(g);
    }
    store
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}
