//! Command implementations behind the `wolfpack` binary.

pub mod commands;
pub mod error;
pub mod plot;
pub mod protocol;
pub mod serve;

pub use crate::error::{CliError, CliResult, EXIT_TRAINING, EXIT_USAGE};
