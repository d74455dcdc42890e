//! Semantic object-goal navigation on a lattice world.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece:
//!
//! - [`world`]: floorplans, discrete robot kinematics, ray-cast visibility.
//! - [`perception`]: simulated two-tier detector and scene-area segmentation.
//! - [`knowledge`]: relation statistics learned from scene graphs.
//! - [`geosem`]: the GeoSem map of visited poses, landmark scores and backtracking.
//! - [`agent`]: the navigation policy and the episode loop.
//! - [`sim`]: the shared step/observe machinery used by agents, baselines and human sessions.
//!
//! File formats, CLI and the session service live in the `semnav` crate.

#![no_std]
// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod agent;
pub mod geosem;
pub mod knowledge;
pub mod perception;
pub mod sim;
pub mod world;

mod math;

pub use agent::{AgentParams, EpisodeResult, Termination};
pub use geosem::{GeoSemMap, LandmarkParams, StepRecord};
pub use knowledge::{KnowledgeParams, SceneGraph, TripleStore};
pub use perception::{ClassTable, DetectorModel, EgoScene};
pub use sim::Simulator;
pub use world::{Action, ActionModel, Cell, Floorplan, RobotState};
