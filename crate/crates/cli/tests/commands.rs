mod common;

use std::fs;
use std::path::PathBuf;

use common::{stderr_error, tiny_config, wolfpack};
use wolfpack_cli::commands::{cmd_eval, cmd_replay, cmd_rollout, cmd_train, EvalArgs, EvalKind, ReplayArgs, RolloutArgs, TrainArgs};
use wolfpack_cli::{EXIT_USAGE};
use wolfpack_core::checkpoint::Checkpoint;
use wolfpack_core::config::RunConfig;
use wolfpack_core::env::{EpisodeLog, Pos};
use wolfpack_core::PreferenceVector;

fn train_tiny(dir: &std::path::Path, episodes: u64) -> Vec<PathBuf> {
    let config = tiny_config(dir, episodes);
    cmd_train(&TrainArgs { config, ..TrainArgs::default() }).unwrap().checkpoints
}

fn eval_args(kind: EvalKind, checkpoints: Vec<PathBuf>, out: PathBuf) -> EvalArgs {
    EvalArgs { kind, checkpoints, episodes: 4, grid: 5, epsilon: 0.0, seed: 1, out, plot: true }
}

#[test]
fn train_writes_artifacts_and_snapshot_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 6);
    let report = cmd_train(&TrainArgs { config, ..TrainArgs::default() }).unwrap();
    assert_eq!(report.episodes, 6);
    assert_eq!(report.checkpoints.len(), 2);
    assert!(report.checkpoints[1].ends_with("tiny/agent1_ep6.ckpt.json"));
    let metrics = fs::read_to_string(&report.metrics).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 6 * 2);

    // the snapshot alone reproduces the run
    let snap = RunConfig::load(&report.snapshot).unwrap();
    let again = cmd_train(&TrainArgs {
        config: report.snapshot.clone(),
        out: Some(dir.path().join("again")),
        ..TrainArgs::default()
    })
    .unwrap();
    assert_eq!(snap.training.seed, 3);
    assert_eq!(fs::read(&again.metrics).unwrap(), metrics.as_bytes());
}

#[test]
fn fixed_training_uses_one_vector() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 3);
    let report = cmd_train(&TrainArgs {
        config,
        fixed: Some(PreferenceVector::COOPERATIVE),
        ..TrainArgs::default()
    })
    .unwrap();
    let ckpt = Checkpoint::load(&report.checkpoints[0]).unwrap();
    assert_eq!(ckpt.meta.preference_space, vec![PreferenceVector::COOPERATIVE]);
    let metrics = fs::read_to_string(&report.metrics).unwrap();
    assert!(metrics.lines().skip(1).all(|l| l.contains(",0.005,0.025,0,0.97,")), "{metrics}");
}

#[test]
fn eval_protocols_write_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let ckpts = train_tiny(dir.path(), 3);
    let out = dir.path().join("eval");

    let sweep = cmd_eval(&eval_args(EvalKind::Sweep, ckpts.clone(), out.clone())).unwrap();
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&sweep.json).unwrap()).unwrap();
    assert_eq!(json["points"].as_array().unwrap().len(), 5);
    assert_eq!(fs::read_to_string(&sweep.csv).unwrap().lines().count(), 6);
    assert!(fs::read_to_string(sweep.plot.unwrap()).unwrap().starts_with("<svg"));

    let heat = cmd_eval(&eval_args(EvalKind::Heatmap, ckpts.clone(), out.clone())).unwrap();
    assert_eq!(fs::read_to_string(&heat.csv).unwrap().lines().count(), 1 + 25);

    let three = vec![ckpts[0].clone(), ckpts[1].clone(), ckpts[0].clone()];
    let r = cmd_eval(&eval_args(EvalKind::Three, three, out.clone())).unwrap();
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&r.json).unwrap()).unwrap();
    assert_eq!(json["predators"], 3);

    let payoff = cmd_eval(&eval_args(EvalKind::Payoff, ckpts.clone(), out)).unwrap();
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&payoff.json).unwrap()).unwrap();
    assert_eq!(json["same_model"], false);
    assert_eq!(fs::read_to_string(&payoff.csv).unwrap().lines().count(), 5);
}

#[test]
fn eval_rejects_wrong_checkpoint_counts() {
    let dir = tempfile::tempdir().unwrap();
    let ckpts = train_tiny(dir.path(), 2);
    let err = cmd_eval(&eval_args(EvalKind::Three, ckpts, dir.path().to_path_buf())).err().unwrap();
    assert_eq!(err.code, EXIT_USAGE);
}

#[test]
fn rollout_then_replay_gives_one_frame_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let ckpts = train_tiny(dir.path(), 2);
    let log_path = dir.path().join("episode.csv");
    let stats = cmd_rollout(&RolloutArgs {
        checkpoints: ckpts,
        weights: vec![PreferenceVector::COMPETITIVE],
        epsilon: 0.0,
        seed: 4,
        out: log_path.clone(),
    })
    .unwrap();
    let log = EpisodeLog::read_csv(fs::File::open(&log_path).unwrap()).unwrap();
    assert_eq!(log.len() as u32, stats.length);

    let gif = dir.path().join("episode.gif");
    let args = ReplayArgs { log: log_path, map: "bundled:desk8".into(), out: gif.clone(), scale: 4, delay_ms: 50, viewer: 0 };
    assert_eq!(cmd_replay(&args).unwrap(), log.len());
    let decoder = image::codecs::gif::GifDecoder::new(std::io::BufReader::new(fs::File::open(&gif).unwrap())).unwrap();
    use image::AnimationDecoder;
    assert_eq!(decoder.into_frames().count(), log.len());
}

/// A hand-written log: 150 no-capture steps, or a capture on the last step.
fn write_log(path: &std::path::Path, steps: usize, capture_at_end: bool) {
    let mut text = String::from("t,prey_x,prey_y,prey_action,p0_x,p0_y,p0_action,p0_r_step,p0_r_wall,p0_r_lone,p0_r_team,p1_x,p1_y,p1_action,p1_r_step,p1_r_wall,p1_r_lone,p1_r_team,capture\n");
    for t in 1..=steps {
        let last = t == steps && capture_at_end;
        let (p0, lone, cap) = if last { ((7, 7), 1, "lone:0") } else { ((0, 0), 0, "none") };
        text += &format!("{t},7,7,0,{},{},0,-1,0,{lone},0,0,7,0,-1,0,0,0,{cap}\n", p0.0, p0.1);
    }
    fs::write(path, text).unwrap();
}

#[test]
fn replay_counts_frames_and_draws_the_capturer_on_top() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("long.csv");
    write_log(&log, 150, false);
    let gif = dir.path().join("long.gif");
    let args = ReplayArgs { log, map: "bundled:desk8".into(), out: gif.clone(), scale: 1, delay_ms: 10, viewer: 0 };
    assert_eq!(cmd_replay(&args).unwrap(), 150);

    let log = dir.path().join("capture.csv");
    write_log(&log, 3, true);
    let gif = dir.path().join("capture.gif");
    cmd_replay(&ReplayArgs { log, map: "bundled:desk8".into(), out: gif.clone(), scale: 1, delay_ms: 10, viewer: 0 }).unwrap();
    use image::AnimationDecoder;
    let decoder = image::codecs::gif::GifDecoder::new(std::io::BufReader::new(fs::File::open(&gif).unwrap())).unwrap();
    let frames: Vec<_> = decoder.into_frames().collect::<Result<_, _>>().unwrap();
    let last = frames.last().unwrap().buffer();
    let shared = Pos::new(7, 7);
    // the viewer (blue) is drawn over the prey (red) on the shared cell
    assert_eq!(last.get_pixel(shared.x as u32, shared.y as u32).0, [0, 0, 255, 255]);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "map = \"missing.map\"\n").unwrap();
    let out = wolfpack(&["train", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["error"], "config");

    let empty = dir.path().join("empty.csv");
    write_log(&empty, 0, false);
    let out = wolfpack(&["replay", "--log", empty.to_str().unwrap(), "--out", dir.path().join("x.gif").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let garbage = dir.path().join("garbage.csv");
    fs::write(&garbage, "t,x\n1,2\n").unwrap();
    let out = wolfpack(&["replay", "--log", garbage.to_str().unwrap(), "--out", dir.path().join("y.gif").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_error(&out)["message"].as_str().unwrap().contains("malformed"));

    let out = wolfpack(&["eval", "sweep", "--ckpt", dir.path().join("none.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = wolfpack(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn binary_train_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), 2);
    let out = wolfpack(&["train", "--config", config.to_str().unwrap(), "--seed", "7", "--fixed", "competitive"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ckpts: Vec<String> = report["checkpoints"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    let eval_dir = dir.path().join("eval");
    let out = wolfpack(&["eval", "payoff", "--row", &ckpts[0], "--col", &ckpts[1], "--episodes", "2", "--out", eval_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = dir.path().join("payoff.svg");
    let out = wolfpack(&["plot", "--input", eval_dir.join("payoff.json").to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(fs::read_to_string(svg).unwrap().contains("</svg>"));
}
