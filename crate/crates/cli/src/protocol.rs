//! Line-delimited JSON messages exchanged with the live viewer.

use serde::{Deserialize, Serialize};
use wolfpack_core::{CaptureKind, PreferenceVector};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    SetWeights { agent: usize, w: [f64; 4] },
    Pause,
    Resume,
    SetSpeed { steps_per_sec: f64 },
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame {
        t: u32,
        episode: u64,
        grid: Vec<Vec<u8>>,
    },
    Stats {
        window: usize,
        episodes: usize,
        team_rate: f64,
        lone_rate: f64,
        weights: Vec<PreferenceVector>,
        paused: bool,
        steps_per_sec: f64,
    },
    EpisodeEnd {
        episode: u64,
        outcome: CaptureKind,
        length: u32,
    },
    Error {
        message: String,
    },
}

#[derive(Serialize)]
struct Versioned<'a> {
    v: u32,
    #[serde(flatten)]
    msg: &'a ServerMessage,
}

impl ServerMessage {
    pub fn to_line(&self) -> String {
        serde_json::to_string(&Versioned { v: PROTOCOL_VERSION, msg: self })
            .expect("server messages serialize")
    }
}

/// Parses one client line. The `v` field is optional but must be 1 when present.
pub fn parse_client(line: &str) -> Result<ClientMessage, String> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    match value.get("v") {
        None => {}
        Some(v) if v.as_u64() == Some(u64::from(PROTOCOL_VERSION)) => {}
        Some(v) => return Err(format!("unsupported protocol version {v}")),
    }
    let mut value = value;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("v");
    }
    serde_json::from_value(value).map_err(|e| format!("invalid message: {e}"))
}
