//! Implementations of the `train`, `eval`, `rollout` and `replay` commands.

use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::gif::{GifEncoder, Repeat};
use image::{Delay, Frame as GifFrame, Rgba, RgbaImage};
use log::info;
use serde::Serialize;
use wolfpack_core::checkpoint::Checkpoint;
use wolfpack_core::config::{MapSource, RunConfig};
use wolfpack_core::env::{render, EnvConfig, EnvState, EpisodeLog, GridMap};
use wolfpack_core::eval::{self, EvalSettings, Policy, Stance};
use wolfpack_core::trainer::{run_training, Trainer};
use wolfpack_core::{Error, PreferenceVector};

use crate::error::{CliError, CliResult};
use crate::plot;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    Error::io(path, e).into()
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// `cooperative`, `competitive`, or four comma-separated weights.
pub fn parse_weights(spec: &str) -> CliResult<PreferenceVector> {
    match spec {
        "cooperative" => Ok(PreferenceVector::COOPERATIVE),
        "competitive" => Ok(PreferenceVector::COMPETITIVE),
        _ => {
            let parts: Vec<f64> = spec
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::usage(format!("cannot parse weights {spec:?}")))?;
            let w: [f64; 4] = parts
                .try_into()
                .map_err(|_| CliError::usage(format!("weights {spec:?} need exactly 4 values")))?;
            Ok(PreferenceVector::new(w)?)
        }
    }
}

/// `bundled:<name>` or a map file path relative to the working directory.
pub fn load_map(spec: &str) -> CliResult<GridMap> {
    Ok(MapSource::parse(spec, Path::new(".")).load()?)
}

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub fixed: Option<PreferenceVector>,
    pub episodes: Option<u64>,
    pub out: Option<PathBuf>,
    pub run_id: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub run_dir: PathBuf,
    pub metrics: PathBuf,
    pub snapshot: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub episodes: u64,
}

/// Loads a run file, applies command-line overrides and trains.
pub fn cmd_train(args: &TrainArgs) -> CliResult<TrainReport> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.training.seed = seed;
    }
    if let Some(episodes) = args.episodes {
        cfg.training.episodes = episodes;
    }
    if let Some(w) = args.fixed {
        cfg.fix_preferences(w);
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(id) = &args.run_id {
        cfg.run_id = id.clone();
    }
    cfg.validate()?;
    let mut trainer = Trainer::new(&cfg.map, cfg.env, &cfg.net, cfg.agent_specs()?, cfg.training.clone())?;
    let snapshot = cfg.write_snapshot()?;
    info!(
        "training {} agents for {} episodes into {}",
        cfg.agents.len(),
        cfg.training.episodes,
        cfg.output().run_dir().display()
    );
    let summary = run_training(&mut trainer, &cfg.output())?;
    Ok(TrainReport {
        run_dir: cfg.output().run_dir(),
        metrics: summary.metrics_path,
        snapshot,
        checkpoints: summary.checkpoints,
        episodes: summary.episodes,
    })
}

/// Checkpoints loaded for evaluation, all trained on the same map.
pub struct LoadedPolicies {
    pub map: GridMap,
    pub env: EnvConfig,
    pub policies: Vec<Policy>,
}

pub fn load_policies(paths: &[PathBuf]) -> CliResult<LoadedPolicies> {
    let mut loaded: Option<(GridMap, EnvConfig)> = None;
    let mut policies = Vec::with_capacity(paths.len());
    for path in paths {
        let ckpt = Checkpoint::load(path)?;
        let map = ckpt.map()?;
        ckpt.check_compatible(&map)?;
        match &loaded {
            None => loaded = Some((map, ckpt.meta.env)),
            Some((first, _)) if *first != map => {
                return Err(Error::Checkpoint(format!(
                    "{} was trained on a different map than {}",
                    path.display(),
                    paths[0].display()
                ))
                .into())
            }
            Some(_) => {}
        }
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        policies.push(Policy::new(name, ckpt.params()?));
    }
    let (map, env) = loaded.ok_or_else(|| CliError::usage("no checkpoints given"))?;
    Ok(LoadedPolicies { map, env, policies })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalKind {
    Sweep,
    Heatmap,
    Three,
    Payoff,
}

impl EvalKind {
    pub fn name(self) -> &'static str {
        match self {
            EvalKind::Sweep => "sweep",
            EvalKind::Heatmap => "heatmap",
            EvalKind::Three => "three",
            EvalKind::Payoff => "payoff",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub kind: EvalKind,
    /// Row then column checkpoint for payoff matrices.
    pub checkpoints: Vec<PathBuf>,
    pub episodes: usize,
    pub grid: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub plot: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub plot: Option<PathBuf>,
}

fn csv_text<F>(header: &[&str], fill: F) -> CliResult<String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(Error::from)?;
    fill(&mut w).map_err(Error::from)?;
    let bytes = w.into_inner().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn sweep_csv(r: &eval::SweepResult) -> CliResult<String> {
    csv_text(
        &["w_step", "w_wall", "w_lone", "w_team", "lone_rate", "team_rate", "none_rate", "mean_length", "episodes"],
        |w| {
            for p in &r.points {
                let x = p.weights[0];
                w.serialize((x.step(), x.wall(), x.lone(), x.team(), p.lone_rate, p.team_rate, p.none_rate, p.mean_length, p.episodes))?;
            }
            Ok(())
        },
    )
}

fn heatmap_csv(h: &eval::Heatmap) -> CliResult<String> {
    csv_text(&["i", "j", "a_w_lone", "b_w_lone", "team_rate", "lone_rate"], |w| {
        for (i, a) in h.grid_a.iter().enumerate() {
            for (j, b) in h.grid_b.iter().enumerate() {
                w.serialize((i, j, a.lone(), b.lone(), h.team_rate[i][j], h.lone_rate[i][j]))?;
            }
        }
        Ok(())
    })
}

fn payoff_csv(m: &eval::PayoffMatrix) -> CliResult<String> {
    let name = |s: Stance| if s == Stance::Cooperate { "cooperate" } else { "defect" };
    csv_text(&["row_stance", "col_stance", "row_payoff", "col_payoff"], |w| {
        for (i, rs) in m.stances.iter().enumerate() {
            for (j, cs) in m.stances.iter().enumerate() {
                w.serialize((name(*rs), name(*cs), m.row_payoff[i][j], m.col_payoff[i][j]))?;
            }
        }
        Ok(())
    })
}

/// Runs one evaluation protocol and writes `{kind}.json` and `{kind}.csv`
/// (plus `{kind}.svg` with `plot`) into `args.out`.
pub fn cmd_eval(args: &EvalArgs) -> CliResult<EvalReport> {
    let expected = match args.kind {
        EvalKind::Sweep => 2..=3,
        EvalKind::Heatmap | EvalKind::Payoff => 2..=2,
        EvalKind::Three => 3..=3,
    };
    if !expected.contains(&args.checkpoints.len()) {
        return Err(CliError::usage(format!(
            "eval {} needs {} checkpoints, got {}",
            args.kind.name(),
            if expected.start() == expected.end() { expected.start().to_string() } else { "2 or 3".into() },
            args.checkpoints.len()
        )));
    }
    if args.episodes == 0 {
        return Err(CliError::usage("--episodes must be at least 1"));
    }
    if !(0.0..=1.0).contains(&args.epsilon) {
        return Err(CliError::usage("--epsilon must lie in [0, 1]"));
    }
    let loaded = load_policies(&args.checkpoints)?;
    let settings = EvalSettings {
        episodes: args.episodes,
        epsilon: args.epsilon,
        seed: args.seed,
        env: loaded.env,
    };
    let grid = eval::weight_grid(args.grid)?;
    let p: Vec<&Policy> = loaded.policies.iter().collect();
    let map = &loaded.map;
    let (json, csv, svg) = match args.kind {
        EvalKind::Sweep | EvalKind::Three => {
            let r = eval::matched_sweep(map, &p, &grid, &settings)?;
            (serde_json::to_string_pretty(&r).map_err(Error::from)?, sweep_csv(&r)?, plot::sweep_svg(&r))
        }
        EvalKind::Heatmap => {
            let h = eval::varied_heatmap(map, [p[0], p[1]], &grid, &grid, &settings)?;
            (serde_json::to_string_pretty(&h).map_err(Error::from)?, heatmap_csv(&h)?, plot::heatmap_svg(&h))
        }
        EvalKind::Payoff => {
            let m = eval::payoff_matrix(map, p[0], p[1], &settings)?;
            (serde_json::to_string_pretty(&m).map_err(Error::from)?, payoff_csv(&m)?, plot::payoff_svg(&m))
        }
    };
    let base = args.out.join(args.kind.name());
    let report = EvalReport {
        json: base.with_extension("json"),
        csv: base.with_extension("csv"),
        plot: args.plot.then(|| base.with_extension("svg")),
    };
    write_text(&report.json, &json)?;
    write_text(&report.csv, &csv)?;
    if let Some(path) = &report.plot {
        write_text(path, &svg)?;
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct RolloutArgs {
    pub checkpoints: Vec<PathBuf>,
    /// One vector per checkpoint, or a single vector shared by all.
    pub weights: Vec<PreferenceVector>,
    pub epsilon: f64,
    pub seed: u64,
    pub out: PathBuf,
}

/// Plays one evaluation episode and writes its step log as CSV.
pub fn cmd_rollout(args: &RolloutArgs) -> CliResult<eval::EpisodeStats> {
    let loaded = load_policies(&args.checkpoints)?;
    let n = loaded.policies.len();
    let weights = match args.weights.len() {
        0 => vec![PreferenceVector::COOPERATIVE; n],
        1 => vec![args.weights[0]; n],
        k if k == n => args.weights.clone(),
        k => return Err(CliError::usage(format!("{k} weight vectors for {n} checkpoints"))),
    };
    let policies: Vec<&Policy> = loaded.policies.iter().collect();
    let mut log = EpisodeLog::default();
    let stats = eval::play_episode(&loaded.map, &policies, &weights, args.epsilon, args.seed, loaded.env, Some(&mut log))?;
    let mut bytes = Vec::new();
    log.write_csv(&mut bytes)?;
    write_text(&args.out, &String::from_utf8(bytes).expect("csv output is utf-8"))?;
    Ok(stats)
}

#[derive(Debug, Clone)]
pub struct ReplayArgs {
    pub log: PathBuf,
    pub map: String,
    pub out: PathBuf,
    /// Pixels per grid cell.
    pub scale: u32,
    pub delay_ms: u32,
    /// Predator drawn as "self" (blue).
    pub viewer: usize,
}

/// Scales a rendered frame up to an RGBA image.
pub fn frame_image(state: &EnvState, viewer: usize, scale: u32) -> RgbaImage {
    let frame = render(state, viewer);
    let bytes = frame.as_bytes();
    let width = frame.width() as u32;
    RgbaImage::from_fn(width * scale, frame.height() as u32 * scale, |x, y| {
        let i = (((y / scale) * width + x / scale) * 3) as usize;
        Rgba([bytes[i], bytes[i + 1], bytes[i + 2], 255])
    })
}

/// Renders a logged episode to an animated GIF, one frame per step.
pub fn cmd_replay(args: &ReplayArgs) -> CliResult<usize> {
    if args.scale == 0 {
        return Err(CliError::usage("--scale must be positive"));
    }
    let file = fs::File::open(&args.log).map_err(|e| io_err(&args.log, e))?;
    let log = EpisodeLog::read_csv(file)
        .map_err(|e| CliError::usage(format!("malformed episode log {}: {}", args.log.display(), e.message())))?;
    if log.is_empty() {
        return Err(CliError::usage(format!("episode log {} has no steps", args.log.display())));
    }
    let map = load_map(&args.map)?;
    let mut frames = Vec::with_capacity(log.len());
    for step in &log.steps {
        if args.viewer >= step.predators.len() {
            return Err(CliError::usage(format!("viewer {} but the log has {} predators", args.viewer, step.predators.len())));
        }
        let state = EnvState::from_positions(&map, step.predators.clone(), step.prey, 0, EnvConfig::default())
            .map_err(|e| CliError::usage(format!("step {}: {}", step.t, e.message())))?;
        let delay = Delay::from_numer_denom_ms(args.delay_ms, 1);
        frames.push(GifFrame::from_parts(frame_image(&state, args.viewer, args.scale), 0, 0, delay));
    }
    if let Some(parent) = args.out.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let file = fs::File::create(&args.out).map_err(|e| io_err(&args.out, e))?;
    let mut encoder = GifEncoder::new(std::io::BufWriter::new(file));
    encoder.set_repeat(Repeat::Infinite).map_err(|e| CliError::usage(e.to_string()))?;
    let count = frames.len();
    encoder
        .encode_frames(frames)
        .map_err(|e| CliError::usage(format!("writing {}: {e}", args.out.display())))?;
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_specs() {
        assert_eq!(parse_weights("cooperative").unwrap(), PreferenceVector::COOPERATIVE);
        assert_eq!(parse_weights("competitive").unwrap(), PreferenceVector::COMPETITIVE);
        assert_eq!(parse_weights("0.005, 0.025, 0.2, 0.77").unwrap().0, [0.005, 0.025, 0.2, 0.77]);
        assert!(parse_weights("0.1,0.2").is_err());
        assert!(parse_weights("a,b,c,d").is_err());
        assert!(parse_weights("0,0,0,2").is_err());
    }
}
