//! Episode runners, batch summaries and per-episode output files.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use semnav_core::agent::{greedy_free_space, random_walk, run_episode, BaselinePolicy, EpisodeResult, ManualRun, Termination};
use semnav_core::sim::SimError;
use semnav_core::world::Action;
use serde::{Deserialize, Serialize};

use crate::config::Prepared;
use crate::formats::write_trace;

/// Who chooses the actions in a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Agent,
    Baseline(BaselinePolicy),
}

pub fn run_one(p: &Prepared, policy: Policy, seed: u64) -> Result<EpisodeResult, SimError> {
    let sim = p.simulator()?;
    let budget = p.landmark.budget;
    match policy {
        Policy::Agent => run_episode(&sim, p.start, &p.knowledge, &p.agent, p.landmark, seed),
        Policy::Baseline(BaselinePolicy::RandomWalk) => random_walk(&sim, p.start, budget, seed),
        Policy::Baseline(BaselinePolicy::GreedyFreeSpace) => greedy_free_space(&sim, p.start, budget, seed),
    }
}

/// Runs every seed in parallel. Results come back in seed-list order.
pub fn run_batch(p: &Prepared, policy: Policy, seeds: &[u64]) -> Result<Vec<(u64, EpisodeResult)>, SimError> {
    seeds.par_iter().map(|&s| run_one(p, policy, s).map(|r| (s, r))).collect()
}

/// Re-drives a recorded action list through the simulator, stopping early
/// once the target is found.
pub fn replay(p: &Prepared, actions: &[Action], seed: u64) -> Result<EpisodeResult, SimError> {
    let sim = p.simulator()?;
    let mut m = ManualRun::begin(&sim, p.start, seed)?;
    for &a in actions {
        if m.found() {
            break;
        }
        m.step(a);
    }
    let t = if m.found() { Termination::Found } else { Termination::Stopped };
    Ok(m.finish(t))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Some(Self { min: v[0], max: v[n - 1], mean: v.iter().sum::<f64>() / n as f64, median })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub sim_time_s: Spread,
    pub steps: Spread,
}

impl Summary {
    pub fn of<'a>(results: impl IntoIterator<Item = &'a EpisodeResult>) -> Option<Self> {
        let (mut times, mut steps, mut successes) = (Vec::new(), Vec::new(), 0);
        for r in results {
            times.push(r.sim_time_s);
            steps.push(r.steps as f64);
            successes += usize::from(r.success);
        }
        let n = times.len();
        Some(Self {
            episodes: n,
            successes,
            success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
            sim_time_s: Spread::of(&times)?,
            steps: Spread::of(&steps)?,
        })
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "episodes  {}  success rate {:.3} ({}/{})", self.episodes, self.success_rate, self.successes, self.episodes)?;
        writeln!(f, "{:<12}{:>10}{:>10}{:>10}{:>10}", "", "min", "max", "mean", "median")?;
        for (name, s) in [("sim_time_s", &self.sim_time_s), ("steps", &self.steps)] {
            writeln!(f, "{:<12}{:>10.2}{:>10.2}{:>10.2}{:>10.2}", name, s.min, s.max, s.mean, s.median)?;
        }
        Ok(())
    }
}

pub fn result_path(dir: &Path, seed: u64) -> std::path::PathBuf {
    dir.join(format!("seed-{seed}.result.json"))
}

pub fn trace_path(dir: &Path, seed: u64) -> std::path::PathBuf {
    dir.join(format!("seed-{seed}.trace.jsonl"))
}

/// Writes the result JSON and the step trace for one episode.
pub fn write_episode(dir: &Path, seed: u64, result: &EpisodeResult) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(result_path(dir, seed))?);
    serde_json::to_writer_pretty(&mut w, result)?;
    w.write_all(b"\n")?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(trace_path(dir, seed))?);
    write_trace(&mut w, &result.trace)?;
    w.flush()
}

pub fn write_summary(dir: &Path, summary: &Summary) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    fs::write(dir.join("summary.json"), text)
}
