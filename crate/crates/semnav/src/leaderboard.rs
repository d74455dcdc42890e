//! Append-only JSON-lines record of finished episodes, human and agent.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use semnav_core::agent::EpisodeResult;
use semnav_core::geosem::Pose;
use serde::{Deserialize, Serialize};

use crate::harness::Spread;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Human,
    Agent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub player: Player,
    pub plan: String,
    pub target: String,
    pub start: Pose,
    pub seed: u64,
    /// Wall-clock duration for human sessions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
    pub result: EpisodeResult,
}

impl Entry {
    /// The time compared on the board: wall clock for humans, simulated
    /// seconds for the agent.
    pub fn time_s(&self) -> f64 {
        match (self.player, self.wall_clock_s) {
            (Player::Human, Some(t)) => t,
            _ => self.result.sim_time_s,
        }
    }

    pub fn same_task(&self, plan: &str, target: &str, start: Pose) -> bool {
        self.plan == plan && self.target == target && self.start == start
    }
}

pub struct Leaderboard {
    path: PathBuf,
    lock: Mutex<()>,
}

impl Leaderboard {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into(), lock: Mutex::new(()) }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &Entry) -> io::Result<()> {
        let _g = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut line = serde_json::to_vec(entry)?;
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(&line)?;
        f.flush()
    }

    /// All entries; a missing file reads as empty.
    pub fn entries(&self) -> io::Result<Vec<Entry>> {
        let _g = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        read_entries(&self.path)
    }
}

pub fn read_entries(path: &Path) -> io::Result<Vec<Entry>> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(e);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub plan: String,
    pub target: String,
    pub player: Player,
    pub runs: usize,
    pub successes: usize,
    pub time_s: Spread,
}

/// Min/max/mean time per (plan, target, player) over successful runs.
pub fn table(entries: &[Entry]) -> Vec<Row> {
    let mut groups: BTreeMap<(&str, &str, Player), (usize, Vec<f64>)> = BTreeMap::new();
    for e in entries {
        let g = groups.entry((&e.plan, &e.target, e.player)).or_default();
        g.0 += 1;
        if e.result.success {
            g.1.push(e.time_s());
        }
    }
    groups
        .into_iter()
        .filter_map(|((plan, target, player), (runs, times))| {
            Some(Row {
                plan: plan.into(),
                target: target.into(),
                player,
                runs,
                successes: times.len(),
                time_s: Spread::of(&times)?,
            })
        })
        .collect()
}
