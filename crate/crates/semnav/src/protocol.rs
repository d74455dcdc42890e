//! JSON messages of the live session protocol.

use semnav_core::geosem::Pose;
use semnav_core::perception::{Detection, EgoScene, SceneArea};
use semnav_core::world::Action;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Start {
        plan: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Action {
        value: Action,
    },
    Quit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Busy,
    Malformed,
    UnknownSession,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    /// Egocentric view only; the pose and map are never sent while playing.
    Frame {
        session_id: u64,
        target: String,
        areas: Vec<SceneArea>,
        detections: Vec<Detection>,
        pose_hidden: bool,
        elapsed_s: f64,
        wall_clock_s: f64,
        steps: usize,
    },
    Result {
        session_id: u64,
        success: bool,
        elapsed_s: f64,
        wall_clock_s: f64,
        steps: usize,
        final_pose: Pose,
    },
    Error {
        code: ErrorCode,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        message: String,
    },
}

impl ServerMessage {
    pub fn frame(session_id: u64, target: &str, ego: &EgoScene, elapsed_s: f64, wall_clock_s: f64, steps: usize) -> Self {
        ServerMessage::Frame {
            session_id,
            target: target.into(),
            areas: ego.areas.clone(),
            detections: ego.detections.clone(),
            pose_hidden: true,
            elapsed_s,
            wall_clock_s,
            steps,
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error { code, message: message.into() }
    }
}

pub fn parse_client(text: &str) -> Result<ClientMessage, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn encode(msg: &ServerMessage) -> String {
    serde_json::to_string(msg).expect("server messages always serialize")
}
