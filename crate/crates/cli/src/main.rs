use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wolfpack_cli::commands::{self, EvalArgs, EvalKind, ReplayArgs, RolloutArgs, TrainArgs};
use wolfpack_cli::serve::{self, ServeOptions};
use wolfpack_cli::{plot, CliError, CliResult};
use wolfpack_core::PreferenceVector;

#[derive(Parser)]
#[command(name = "wolfpack", version, about = "Train, evaluate and serve tunable Wolfpack predators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train agents from a run config (TOML or JSON).
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Train every predator on one fixed preference vector.
        #[arg(long, value_enum)]
        fixed: Option<FixedPrefs>,
        #[arg(long)]
        episodes: Option<u64>,
        /// Output directory (the run id becomes a subdirectory).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Evaluate trained checkpoints.
    Eval {
        #[command(subcommand)]
        kind: EvalCommand,
    },
    /// Host a live session for the browser viewer.
    Serve {
        #[arg(long = "ckpt", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = serve::DEFAULT_STEPS_PER_SEC)]
        steps_per_sec: f64,
        /// Episodes in the rolling statistics window.
        #[arg(long, default_value_t = serve::DEFAULT_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial weights, one per predator or one shared (`cooperative`,
        /// `competitive` or four comma-separated numbers).
        #[arg(long = "weights")]
        weights: Vec<String>,
        /// Directory holding the built viewer (index.html).
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Play one greedy episode and write its step log as CSV.
    Rollout {
        #[arg(long = "ckpt", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long = "weights")]
        weights: Vec<String>,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an episode log to an animated GIF, one frame per step.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// `bundled:wolfpack16`, `bundled:desk8` or a map file.
        #[arg(long, default_value = "bundled:wolfpack16")]
        map: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        scale: u32,
        #[arg(long, default_value_t = 100)]
        delay_ms: u32,
        #[arg(long, default_value_t = 0)]
        viewer: usize,
    },
    /// Draw an SVG chart from an eval result JSON file.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FixedPrefs {
    Cooperative,
    Competitive,
}

#[derive(Args)]
struct EvalFlags {
    #[arg(long, default_value_t = wolfpack_core::eval::DEFAULT_EPISODES)]
    episodes: usize,
    /// Lone-capture weights per axis, evenly spaced on [0, 0.97].
    #[arg(long, default_value_t = 5)]
    grid: usize,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "eval")]
    out: PathBuf,
    /// Also write an SVG chart.
    #[arg(long)]
    plot: bool,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Matched-preference sweep with two or three predators.
    Sweep {
        #[arg(long = "ckpt", required = true)]
        checkpoints: Vec<PathBuf>,
        #[command(flatten)]
        flags: EvalFlags,
    },
    /// Team-capture rate for every pair of weights (two predators).
    Heatmap {
        #[arg(long = "ckpt", required = true)]
        checkpoints: Vec<PathBuf>,
        #[command(flatten)]
        flags: EvalFlags,
    },
    /// Matched sweep with exactly three predators.
    Three {
        #[arg(long = "ckpt", required = true)]
        checkpoints: Vec<PathBuf>,
        #[command(flatten)]
        flags: EvalFlags,
    },
    /// Cooperate/defect payoff matrix between a row and a column agent.
    Payoff {
        #[arg(long)]
        row: PathBuf,
        #[arg(long)]
        col: PathBuf,
        #[command(flatten)]
        flags: EvalFlags,
    },
}

fn weights(specs: &[String]) -> CliResult<Vec<PreferenceVector>> {
    specs.iter().map(|s| commands::parse_weights(s)).collect()
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("reports serialize"));
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { config, seed, fixed, episodes, out, run_id } => {
            let fixed = fixed.map(|f| match f {
                FixedPrefs::Cooperative => PreferenceVector::COOPERATIVE,
                FixedPrefs::Competitive => PreferenceVector::COMPETITIVE,
            });
            let report = commands::cmd_train(&TrainArgs { config, seed, fixed, episodes, out, run_id })?;
            print_json(&report);
        }
        Command::Eval { kind } => {
            let (kind, checkpoints, f) = match kind {
                EvalCommand::Sweep { checkpoints, flags } => (EvalKind::Sweep, checkpoints, flags),
                EvalCommand::Heatmap { checkpoints, flags } => (EvalKind::Heatmap, checkpoints, flags),
                EvalCommand::Three { checkpoints, flags } => (EvalKind::Three, checkpoints, flags),
                EvalCommand::Payoff { row, col, flags } => (EvalKind::Payoff, vec![row, col], flags),
            };
            let report = commands::cmd_eval(&EvalArgs {
                kind,
                checkpoints,
                episodes: f.episodes,
                grid: f.grid,
                epsilon: f.epsilon,
                seed: f.seed,
                out: f.out,
                plot: f.plot,
            })?;
            print_json(&report);
        }
        Command::Serve { checkpoints, port, host, steps_per_sec, window, epsilon, seed, weights: w, ui_dir } => {
            let handle = serve::start(&ServeOptions {
                checkpoints,
                host,
                port,
                steps_per_sec,
                window,
                epsilon,
                seed,
                weights: weights(&w)?,
                ui_dir,
            })?;
            println!("listening on http://{}", handle.addr);
            handle.wait();
        }
        Command::Rollout { checkpoints, weights: w, epsilon, seed, out } => {
            let stats = commands::cmd_rollout(&RolloutArgs { checkpoints, weights: weights(&w)?, epsilon, seed, out })?;
            print_json(&stats);
        }
        Command::Replay { log, map, out, scale, delay_ms, viewer } => {
            let frames = commands::cmd_replay(&ReplayArgs { log, map, out: out.clone(), scale, delay_ms, viewer })?;
            print_json(&serde_json::json!({"out": out, "frames": frames}));
        }
        Command::Plot { input, out } => {
            let text = std::fs::read_to_string(&input)
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", input.display())))?;
            let svg = plot::svg_from_json(&text).map_err(|e| CliError::usage(format!("{}: {e}", input.display())))?;
            std::fs::write(&out, svg).map_err(|e| CliError::usage(format!("cannot write {}: {e}", out.display())))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::usage(e.to_string().lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ").to_string());
            eprintln!("{}", err.to_json_line());
            return ExitCode::from(err.code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.code as u8)
        }
    }
}
