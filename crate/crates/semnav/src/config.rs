use std::borrow::Cow;
use std::fs;
use std::path::{Path, PathBuf};

use semnav_core::agent::AgentParams;
use semnav_core::geosem::LandmarkParams;
use semnav_core::knowledge::{ingest_corpus, KnowledgeParams, TripleStore};
use semnav_core::perception::{ClassTable, DetectorModel};
use semnav_core::sim::{SimConfig, SimError, Simulator};
use semnav_core::world::{ActionModel, BodyDims, Floorplan, PoseDoc, RobotState, SuccessCriteria};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundled;
use crate::formats::{self, FormatError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("unknown bundled resource {0:?}")]
    UnknownBundled(String),
    #[error("no target given and the floorplan names none")]
    MissingTarget,
    #[error("no start pose given and the floorplan names none")]
    MissingStart,
    #[error("seed list is empty")]
    NoSeeds,
    #[error("invalid {0} parameters")]
    BadParams(&'static str),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Everything a run needs. Data sources are file paths or `bundled:<name>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub floorplan: String,
    /// Defaults to the floorplan's own target.
    pub target: Option<String>,
    pub classes: String,
    pub corpus: String,
    /// Exported triples to load instead of ingesting `corpus`.
    pub triples: Option<String>,
    pub seeds: Vec<u64>,
    /// Defaults to the floorplan's start pose.
    pub start: Option<PoseDoc>,
    pub output: Option<PathBuf>,
    pub knowledge: KnowledgeParams,
    pub landmark: LandmarkParams,
    pub agent: AgentParams,
    pub detector: DetectorModel,
    pub action_model: ActionModel,
    pub criteria: SuccessCriteria,
    pub dims: BodyDims,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            floorplan: "bundled:office_fig3".into(),
            target: None,
            classes: "bundled:classes".into(),
            corpus: "bundled:corpus".into(),
            triples: None,
            seeds: vec![0],
            start: None,
            output: None,
            knowledge: KnowledgeParams::default(),
            landmark: LandmarkParams::default(),
            agent: AgentParams::default(),
            detector: DetectorModel::default(),
            action_model: ActionModel::default(),
            criteria: SuccessCriteria::default(),
            dims: BodyDims::default(),
        }
    }
}

/// Text of a data source, with the name used in diagnostics.
pub fn read_source(source: &str) -> Result<(String, Cow<'static, str>), ConfigError> {
    if source.starts_with(bundled::PREFIX) {
        let text = bundled::resolve(source).ok_or_else(|| ConfigError::UnknownBundled(source.into()))?;
        return Ok((source.into(), Cow::Borrowed(text)));
    }
    let text = fs::read_to_string(source)
        .map_err(|e| FormatError::Io { path: source.into(), source: e })?;
    Ok((source.into(), Cow::Owned(text)))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| FormatError::Io { path: path.display().to_string(), source: e })?;
        serde_json::from_str(&text)
            .map_err(|e| FormatError::Json { path: path.display().to_string(), source: e }.into())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            camera: self.agent.camera(),
            detector: self.detector,
            action_model: self.action_model,
            criteria: self.criteria,
            k_areas: self.agent.k_areas,
            dims: self.dims,
        }
    }

    /// Loads and validates every input.
    pub fn prepare(&self) -> Result<Prepared, ConfigError> {
        if !self.agent.is_valid() {
            return Err(ConfigError::BadParams("agent"));
        }
        if !self.landmark.is_valid() {
            return Err(ConfigError::BadParams("landmark"));
        }
        let (name, text) = read_source(&self.floorplan)?;
        let plan = formats::parse_floorplan(&name, &text)?;
        let (name, text) = read_source(&self.classes)?;
        let classes = formats::parse_classes(&name, &text)?;
        let knowledge = match &self.triples {
            Some(src) => formats::import_triples(&read_source(src)?.1)?,
            None => {
                let (name, text) = read_source(&self.corpus)?;
                let corpus = formats::parse_corpus(&name, &text)?;
                ingest_corpus(&corpus, self.knowledge, &classes).map_err(FormatError::from)?
            }
        };
        let target = match &self.target {
            Some(t) => t.clone(),
            None => plan.default_target().ok_or(ConfigError::MissingTarget)?.to_string(),
        };
        let start = match self.start {
            Some(p) => RobotState::new(p.x, p.y, p.heading_deg, self.dims),
            None => plan.start_pose(self.dims).ok_or(ConfigError::MissingStart)?,
        };
        let prepared = Prepared {
            plan,
            classes,
            knowledge,
            target,
            start,
            sim: self.sim_config(),
            agent: self.agent.clone(),
            landmark: self.landmark,
        };
        let sim = prepared.simulator()?;
        sim.start(start, 0)?;
        Ok(prepared)
    }
}

/// Loaded inputs for one (plan, target, start) triple.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub plan: Floorplan,
    pub classes: ClassTable,
    pub knowledge: TripleStore,
    pub target: String,
    pub start: RobotState,
    pub sim: SimConfig,
    pub agent: AgentParams,
    pub landmark: LandmarkParams,
}

impl Prepared {
    pub fn simulator(&self) -> Result<Simulator<'_>, SimError> {
        Simulator::new(&self.plan, &self.classes, &self.target, self.sim)
    }
}
