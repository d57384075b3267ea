#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A tiny desk-map run config: 4-filter convs, short training.
pub fn tiny_config(dir: &Path, episodes: u64) -> PathBuf {
    let path = dir.join("tiny.toml");
    let text = format!(
        r#"run_id = "tiny"
seed = 3
map = "bundled:desk8"
profile = "desk"
output_dir = "runs"

[net]
conv = [{{ filters = 4, kernel = 3 }}, {{ filters = 4, kernel = 3 }}]
dense = [8, 8]

[training]
episodes = {episodes}
warmup_episodes = 2
batch_size = 8
updates_per_episode = 1
"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

pub fn wolfpack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wolfpack"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Parses the one-line JSON error printed on failure.
pub fn stderr_error(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr is not a JSON line: {text}"))
}
