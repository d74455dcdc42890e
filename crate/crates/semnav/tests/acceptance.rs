//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::oracle::{build, close, graphs, name, params, scene, Oracle, CLASSES, ZONES};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use semnav::config::{Prepared, RunConfig};
use semnav::harness::{run_batch, run_one, trace_path, write_episode, Policy, Spread};
use semnav_core::agent::{BaselinePolicy, Episode, Rule, Termination};
use semnav_core::geosem::{landmark_score, LandmarkParams};
use semnav_core::world::{apply_action, Action, ActionModel, BodyDims, RobotState, Transition};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn prepare(plan: &str, target: Option<&str>) -> Prepared {
    let cfg = RunConfig { floorplan: format!("bundled:{plan}"), target: target.map(String::from), ..RunConfig::default() };
    cfg.prepare().expect("bundled inputs load")
}

fn within(t: Duration, limit_s: f64) -> Result<(), String> {
    if t.as_secs_f64() < limit_s {
        Ok(())
    } else {
        Err(format!("took {:.2} s, limit {limit_s} s", t.as_secs_f64()))
    }
}

fn knowledge_oracle() -> Outcome {
    let t = Instant::now();
    let strategy = (prop::collection::vec(scene(), 1..=10), prop::collection::vec(scene(), 0..3), params());
    runner(50)
        .run(&strategy, |(corpus, online, p)| {
            let (corpus, online) = (graphs(corpus, "s"), graphs(online, "o"));
            let store = build(&corpus, &online, p);
            let oracle = Oracle::new(&corpus, &online, &p);
            for i in 0..CLASSES {
                for j in 0..CLASSES {
                    let (a, b) = (name(i), name(j));
                    prop_assert!(close(store.rp(&a, &b).unwrap(), oracle.rp(&a, &b)), "rp({a},{b})");
                    prop_assert!(close(store.on_top_of(&a, &b).unwrap(), oracle.on_top_of(&a, &b)), "on_top_of({a},{b})");
                }
                for z in ZONES {
                    let a = name(i);
                    prop_assert!(close(store.located_at(&a, z).unwrap(), oracle.located_at(&a, z)), "located_at({a},{z})");
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    within(t.elapsed(), 5.0)?;
    Ok(format!("50 corpora in {:.2} s", t.elapsed().as_secs_f64()))
}

fn rp_symmetry() -> Outcome {
    let strategy = (
        prop::collection::vec(scene(), 1..=10),
        prop::collection::vec(scene(), 0..3),
        params(),
        prop::collection::vec((0..CLASSES, 0..CLASSES), 25),
    );
    runner(40)
        .run(&strategy, |(corpus, online, p, qs)| {
            let store = build(&graphs(corpus, "s"), &graphs(online, "o"), p);
            for (i, j) in qs {
                let (a, b) = (name(i), name(j));
                let ab = store.rp(&a, &b).unwrap();
                prop_assert_eq!(ab.to_bits(), store.rp(&b, &a).unwrap().to_bits());
                for v in [ab, store.on_top_of(&a, &b).unwrap(), store.occlusion_by(&a, &b).unwrap()] {
                    prop_assert!((0.0..=1.0).contains(&v), "{v} out of range");
                }
                for z in ZONES {
                    prop_assert!((0.0..=1.0).contains(&store.located_at(&a, z).unwrap()));
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 queries over 40 corpora".into())
}

fn landmark_formula() -> Outcome {
    let p = prepare("office_fig3", None);
    let names: Vec<&str> = p.classes.iter().map(|c| c.name.as_str()).collect();
    let n = names.len();
    let strategy = (prop::collection::vec((0..n, 0.0..=1.0f64), 0..8), 0..n, 0.0..=1.0f64, 0.0..720.0f64, 0.01..5.0f64);
    runner(1000)
        .run(&strategy, |(dets, target, zone, cum, alpha)| {
            let params = LandmarkParams { alpha, ..LandmarkParams::default() };
            let target = names[target];
            let score = |cum| {
                landmark_score(dets.iter().map(|&(i, c)| (names[i], c)), target, zone, cum, &p.knowledge, &p.classes, &params)
            };
            let kept: Vec<&str> = dets.iter().map(|&(i, _)| names[i]).filter(|c| !p.classes.is_extension(c)).collect();
            let mut sum = 0.0;
            for c in &kept {
                sum += if *c == target { 1.0 } else { p.knowledge.rp(c, target).unwrap() };
            }
            let expected = sum / (kept.len().max(1) as f64) * zone * alpha * (cum / 360.0).min(1.0);
            let got = score(cum);
            prop_assert!((got - expected).abs() <= 1e-12, "{got} vs {expected}");
            if cum >= 360.0 {
                prop_assert_eq!(got.to_bits(), score(360.0).to_bits());
                prop_assert_eq!(got.to_bits(), score(cum + 360.0).to_bits());
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 inputs".into())
}

fn lattice_closure() -> Outcome {
    let plan = common::lattice_plan();
    let free: Vec<_> = plan.free_cells().filter(|&c| common::open_cell(&plan, c)).collect();
    let action = prop_oneof![
        Just(Action::Forward),
        Just(Action::Backward),
        Just(Action::RotateLeft),
        Just(Action::RotateRight),
        Just(Action::Stop),
    ];
    let strategy = (0..free.len(), prop::bool::ANY, prop::collection::vec(action, 1..40));
    runner(10_000)
        .run(&strategy, |(start, rot45, actions)| {
            let model = ActionModel { rotation_deg: if rot45 { 45 } else { 90 }, ..ActionModel::default() };
            let c = free[start];
            let mut s = RobotState::new(c.x, c.y, 0, BodyDims::default());
            for a in actions {
                let t = apply_action(s, a, &plan, &model);
                if let Transition::Moved(n) = t {
                    if !common::open_cell(&plan, n.cell()) {
                        return Err(TestCaseError::fail(format!("{a:?} from {s:?} reached {n:?}")));
                    }
                    prop_assert!(n.heading_deg < 360 && n.heading_deg % model.rotation_deg == 0);
                    prop_assert!(s.cell().chebyshev(n.cell()) <= 1);
                }
                s = t.state_or(s);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("10000 sequences".into())
}

fn office_scene() -> Outcome {
    let p = prepare("office_fig3", None);
    let t = Instant::now();
    let r = run_one(&p, Policy::Agent, 0).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    if !r.success {
        return Err(format!("seed 0 ended with {:?}", r.termination));
    }
    let d = r.decisions.iter().find(|d| d.rule == Rule::Relational).ok_or("no relational decision")?;
    let k = d.area_scores.len();
    // The store the agent consulted: the prior plus every frame up to the decision.
    let sim = p.simulator().map_err(|e| e.to_string())?;
    let mut ep = Episode::begin(&sim, p.start, p.knowledge.clone(), p.landmark, 0).map_err(|e| e.to_string())?;
    for &a in &r.actions[..d.step] {
        ep.step(a);
    }
    for (i, members) in d.members.iter().enumerate() {
        let c: f64 = members.iter().map(|o| ep.knowledge.rp(&o.class_name, &p.target).unwrap() * o.confidence).sum();
        let c = if d.kept[i] { c } else { 0.0 };
        if (c - d.area_scores[i]).abs() > 1e-12 {
            return Err(format!("area {i}: recomputed {c}, recorded {}", d.area_scores[i]));
        }
    }
    let best = (0..k).max_by(|&a, &b| d.area_scores[a].total_cmp(&d.area_scores[b])).unwrap();
    if d.area != Some(best) || best != k / 2 {
        return Err(format!("chose {:?}, argmax {best}, middle {}", d.area, k / 2));
    }
    let has = |i: usize, c: &str| d.members[i].iter().any(|o| o.class_name == c);
    if !(has(best, "table") && has(best, "bottle")) {
        return Err("middle area lacks table and bottle".into());
    }
    let chair_only = (0..k).find(|&i| !d.members[i].is_empty() && d.members[i].iter().all(|o| o.class_name == "chair"));
    let Some(chair) = chair_only else { return Err("no chair-only area".into()) };
    if d.area_scores[chair] >= d.area_scores[best] {
        return Err("chair-only area scored as high as the middle".into());
    }
    let last = r.trace.last().ok_or("empty trace")?;
    if !last.detections.iter().any(|o| o.class_name == "cup") {
        return Err("final frame has no cup".into());
    }
    within(elapsed, 1.0)?;
    Ok(format!(
        "middle {:.3} > chair-only {:.3}; found in {} steps, {:.3} s",
        d.area_scores[best], d.area_scores[chair], r.steps, r.sim_time_s
    ))
}

fn replica_time() -> Outcome {
    let p = prepare("webots_replica", None);
    let seeds: Vec<u64> = (0..20).collect();
    let t = Instant::now();
    let results = run_batch(&p, Policy::Agent, &seeds).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let times: Vec<f64> = results.iter().map(|(_, r)| r.sim_time_s).collect();
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let rate = results.iter().filter(|(_, r)| r.success).count() as f64 / results.len() as f64;
    if !(60.0..=240.0).contains(&mean) || rate < 0.9 {
        return Err(format!("mean {mean:.2} s, success rate {rate:.2}"));
    }
    within(elapsed, 30.0)?;
    Ok(format!("mean {mean:.2} s, success rate {rate:.2}, {:.2} s wall", elapsed.as_secs_f64()))
}

fn beats_random_walk() -> Outcome {
    let base = prepare("webots_replica", None);
    let sim = base.simulator().map_err(|e| e.to_string())?;
    let starts: Vec<RobotState> = base
        .plan
        .free_cells()
        .enumerate()
        .map(|(i, c)| RobotState::new(c.x, c.y, 90 * (i % 4) as u16, base.sim.dims))
        .filter(|&s| sim.start(s, 0).is_ok())
        .collect();
    let stride = starts.len() / 20;
    let (mut agent, mut walk) = (Vec::new(), Vec::new());
    for i in 0..20 {
        let p = Prepared { start: starts[i * stride], ..base.clone() };
        let seed = i as u64;
        agent.push(run_one(&p, Policy::Agent, seed).map_err(|e| e.to_string())?.steps as f64);
        walk.push(run_one(&p, Policy::Baseline(BaselinePolicy::RandomWalk), seed).map_err(|e| e.to_string())?.steps as f64);
    }
    let a = Spread::of(&agent).unwrap().median;
    let w = Spread::of(&walk).unwrap().median;
    if a > 0.5 * w {
        return Err(format!("agent median {a} vs random walk {w}"));
    }
    Ok(format!("agent median {a} steps, random walk {w}"))
}

fn exhaustion() -> Outcome {
    let mut ends = Vec::new();
    for (plan, target, seeds) in [("office_fig3", "tv", 0..10), ("webots_replica", "cup", 0..5)] {
        let p = prepare(plan, Some(target));
        for seed in seeds {
            let r = run_one(&p, Policy::Agent, seed).map_err(|e| e.to_string())?;
            let ok = matches!(r.termination, Termination::ScanFull | Termination::Budget)
                && !r.success
                && r.steps <= p.landmark.budget;
            if !ok {
                return Err(format!("{plan}/{target} seed {seed}: {:?} success={} steps={}", r.termination, r.success, r.steps));
            }
            ends.push(r.termination);
        }
    }
    let full = ends.iter().filter(|&&t| t == Termination::ScanFull).count();
    Ok(format!("{} episodes: {full} scan_full, {} budget", ends.len(), ends.len() - full))
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let mut bytes = Vec::new();
    for dir in &dirs {
        for (plan, seed) in [("office_fig3", 0), ("webots_replica", 7)] {
            let p = prepare(plan, None);
            let r = run_one(&p, Policy::Agent, seed).map_err(|e| e.to_string())?;
            let out = dir.path().join(plan);
            write_episode(&out, seed, &r).map_err(|e| e.to_string())?;
            bytes.push(std::fs::read(trace_path(&out, seed)).map_err(|e| e.to_string())?);
        }
    }
    let (a, b) = bytes.split_at(2);
    if a != b {
        return Err("trace files differ".into());
    }
    Ok(format!("{} + {} trace bytes identical", a[0].len(), a[1].len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("knowledge oracle equivalence", knowledge_oracle),
        ("rp symmetry and range", rp_symmetry),
        ("landmark score formula", landmark_formula),
        ("lattice closure", lattice_closure),
        ("office scene relational choice", office_scene),
        ("replica robot time", replica_time),
        ("agent beats random walk", beats_random_walk),
        ("exhaustion semantics", exhaustion),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (label, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {label}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {label}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
