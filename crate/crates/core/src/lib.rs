//! Multi-objective Wolfpack predator–prey environment and tunable DQN agents.
//!
//! Predators receive a reward vector `[step, wall, lone, team]` each step and
//! act on a Q-network that also takes a preference vector as input, so the
//! balance between cooperating (team captures) and competing (lone captures)
//! can be changed at run time by changing the preference weights.

pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod prefs;
pub mod qnet;
pub mod replay;
pub mod rng;
pub mod trainer;

pub use crate::env::{Action, CaptureKind, CaptureOutcome, EnvState, GridMap, Pos, RewardVector};
pub use crate::error::{Error, Result};
pub use crate::prefs::{scalarize, PreferenceSpace, PreferenceVector};
pub use crate::qnet::{NetConfig, QNetworkParams};
