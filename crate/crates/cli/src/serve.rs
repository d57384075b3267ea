//! Live session host: runs episodes continuously with loaded checkpoints and
//! streams frames and rolling capture statistics to websocket clients, which
//! may change each predator's preference weights at any time.
//!
//! The simulation runs on its own thread and owns the [`Session`]. Socket
//! handlers only parse messages and post them to the simulation's mailbox;
//! commands are applied between environment steps, so a weight change takes
//! effect on the very next forward pass.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::mpsc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use log::{info, warn};
use tokio::sync::{broadcast, mpsc as async_mpsc, oneshot};
use tower_http::services::ServeDir;
use wolfpack_core::env::{grid_codes, render, EnvConfig, EnvState, FrameHistory, GridMap};
use wolfpack_core::eval::Policy;
use wolfpack_core::qnet::{encode_prefs, q_values};
use wolfpack_core::rng::{self, StreamRng};
use wolfpack_core::trainer::epsilon_greedy_with;
use wolfpack_core::{CaptureKind, PreferenceVector};

use crate::commands::load_policies;
use crate::error::{CliError, CliResult};
use crate::protocol::{parse_client, ClientMessage, ServerMessage};

pub const DEFAULT_WINDOW: usize = 50;
pub const DEFAULT_STEPS_PER_SEC: f64 = 10.0;
const MAX_STEPS_PER_SEC: f64 = 1000.0;

/// Everything the simulation thread owns.
pub struct Session {
    map: GridMap,
    env_config: EnvConfig,
    policies: Vec<Policy>,
    weights: Vec<PreferenceVector>,
    epsilon: f64,
    state: EnvState,
    histories: Vec<FrameHistory>,
    episode: u64,
    window: usize,
    outcomes: VecDeque<CaptureKind>,
    paused: bool,
    steps_per_sec: f64,
    seed: u64,
    rng: StreamRng,
}

impl Session {
    pub fn new(
        map: GridMap,
        env_config: EnvConfig,
        policies: Vec<Policy>,
        window: usize,
        seed: u64,
    ) -> CliResult<Self> {
        if !(2..=3).contains(&policies.len()) {
            return Err(CliError::usage(format!("serve needs 2 or 3 checkpoints, got {}", policies.len())));
        }
        if window == 0 {
            return Err(CliError::usage("stats window must be positive"));
        }
        let n = policies.len();
        let state = EnvState::reset_with(&map, n, rng::derive_seed(seed, "episode-1"), env_config)?;
        let mut session = Session {
            map,
            env_config,
            weights: vec![PreferenceVector::COOPERATIVE; n],
            policies,
            epsilon: 0.0,
            state,
            histories: vec![FrameHistory::new(); n],
            episode: 1,
            window,
            outcomes: VecDeque::with_capacity(window),
            paused: false,
            steps_per_sec: DEFAULT_STEPS_PER_SEC,
            seed,
            rng: rng::stream(seed, "serve-actions"),
        };
        session.restart_histories();
        Ok(session)
    }

    fn restart_histories(&mut self) {
        for (i, h) in self.histories.iter_mut().enumerate() {
            h.clear();
            h.push(render(&self.state, i));
        }
    }

    fn new_episode(&mut self) -> CliResult<()> {
        self.episode += 1;
        let seed = rng::derive_seed(self.seed, &format!("episode-{}", self.episode));
        self.state = EnvState::reset_with(&self.map, self.policies.len(), seed, self.env_config)?;
        self.restart_histories();
        Ok(())
    }

    pub fn weights(&self) -> &[PreferenceVector] {
        &self.weights
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn steps_per_sec(&self) -> f64 {
        self.steps_per_sec
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon;
    }

    /// Applies one client command; the error string is reported back to the sender.
    pub fn apply(&mut self, msg: ClientMessage) -> Result<(), String> {
        match msg {
            ClientMessage::SetWeights { agent, w } => {
                if agent >= self.weights.len() {
                    return Err(format!("agent {agent} out of range (0..{})", self.weights.len()));
                }
                self.weights[agent] = PreferenceVector::new(w).map_err(|e| e.message())?;
            }
            ClientMessage::Pause => self.paused = true,
            ClientMessage::Resume => self.paused = false,
            ClientMessage::SetSpeed { steps_per_sec } => {
                if !(steps_per_sec > 0.0 && steps_per_sec <= MAX_STEPS_PER_SEC) {
                    return Err(format!("steps_per_sec must be in (0, {MAX_STEPS_PER_SEC}]"));
                }
                self.steps_per_sec = steps_per_sec;
            }
            ClientMessage::Reset => self.new_episode().map_err(|e| e.message)?,
        }
        Ok(())
    }

    pub fn stats(&self) -> ServerMessage {
        let n = self.outcomes.len();
        let rate = |k: CaptureKind| {
            if n == 0 {
                0.0
            } else {
                self.outcomes.iter().filter(|&&o| o == k).count() as f64 / n as f64
            }
        };
        ServerMessage::Stats {
            window: self.window,
            episodes: n,
            team_rate: rate(CaptureKind::Team),
            lone_rate: rate(CaptureKind::Lone),
            weights: self.weights.clone(),
            paused: self.paused,
            steps_per_sec: self.steps_per_sec,
        }
    }

    /// Advances one environment step, returning the frame, an `episode_end`
    /// when the episode finished, and fresh stats.
    pub fn tick(&mut self) -> CliResult<Vec<ServerMessage>> {
        let mut actions = Vec::with_capacity(self.policies.len());
        for (i, policy) in self.policies.iter().enumerate() {
            let obs = self.histories[i].observe().rescaled::<f32>();
            let prefs = encode_prefs::<f32>(policy.params.config(), &self.weights[i])?;
            let a = epsilon_greedy_with(self.epsilon, &mut self.rng, || q_values(&policy.params, &obs, &prefs))?;
            actions.push(a);
        }
        self.state.step(&actions)?;
        for (i, h) in self.histories.iter_mut().enumerate() {
            h.push(render(&self.state, i));
        }
        let mut out = vec![ServerMessage::Frame {
            t: self.state.t(),
            episode: self.episode,
            grid: grid_codes(&self.state),
        }];
        if self.state.is_done() {
            let outcome = self.state.capture().kind();
            out.push(ServerMessage::EpisodeEnd {
                episode: self.episode,
                outcome,
                length: self.state.t(),
            });
            if self.outcomes.len() == self.window {
                self.outcomes.pop_front();
            }
            self.outcomes.push_back(outcome);
            self.new_episode()?;
        }
        out.push(self.stats());
        Ok(out)
    }
}

enum Command {
    Client(ClientMessage, async_mpsc::UnboundedSender<String>),
    Announce,
    Shutdown,
}

fn run_simulation(mut session: Session, inbox: mpsc::Receiver<Command>, out: broadcast::Sender<String>) {
    let publish = |msgs: Vec<ServerMessage>| {
        for m in msgs {
            let _ = out.send(m.to_line());
        }
    };
    let mut next_tick = Instant::now();
    loop {
        let now = Instant::now();
        let wait = if session.is_paused() {
            Duration::from_millis(100)
        } else {
            next_tick.saturating_duration_since(now)
        };
        match inbox.recv_timeout(wait) {
            Ok(Command::Client(msg, reply)) => {
                let was_paused = session.is_paused();
                match session.apply(msg) {
                    Ok(()) => publish(vec![session.stats()]),
                    Err(message) => {
                        let _ = reply.send(ServerMessage::Error { message }.to_line());
                    }
                }
                if was_paused && !session.is_paused() {
                    next_tick = Instant::now();
                }
                continue;
            }
            Ok(Command::Announce) => {
                publish(vec![session.stats()]);
                continue;
            }
            Ok(Command::Shutdown) | Err(mpsc::RecvTimeoutError::Disconnected) => break,
            Err(mpsc::RecvTimeoutError::Timeout) => {}
        }
        if session.is_paused() || Instant::now() < next_tick {
            continue;
        }
        match session.tick() {
            Ok(msgs) => publish(msgs),
            Err(e) => {
                warn!("simulation stopped: {e}");
                break;
            }
        }
        let period = Duration::from_secs_f64(1.0 / session.steps_per_sec());
        next_tick += period;
        // do not try to catch up after a long stall
        let now = Instant::now();
        if next_tick + period < now {
            next_tick = now;
        }
    }
}

#[derive(Clone)]
struct AppState {
    mailbox: mpsc::Sender<Command>,
    out: broadcast::Sender<String>,
}

async fn ws_handler(ws: WebSocketUpgrade, State(app): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| handle_socket(socket, app))
}

async fn handle_socket(socket: WebSocket, app: AppState) {
    let (mut sink, mut stream) = socket.split();
    let mut lines = app.out.subscribe();
    let (direct_tx, mut direct_rx) = async_mpsc::unbounded_channel::<String>();
    let writer = tokio::spawn(async move {
        loop {
            let line = tokio::select! {
                msg = lines.recv() => match msg {
                    Ok(line) => line,
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        warn!("client lagging, dropped {n} messages");
                        continue;
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                Some(line) = direct_rx.recv() => line,
            };
            if sink.send(Message::Text(line.into())).await.is_err() {
                break;
            }
        }
    });
    let _ = app.mailbox.send(Command::Announce);
    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(text) => {
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    match parse_client(line) {
                        Ok(cmd) => {
                            let _ = app.mailbox.send(Command::Client(cmd, direct_tx.clone()));
                        }
                        Err(message) => {
                            let _ = direct_tx.send(ServerMessage::Error { message }.to_line());
                        }
                    }
                }
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    writer.abort();
}

const PLACEHOLDER_PAGE: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>wolfpack</title></head>
<body>
<h1>wolfpack session</h1>
<p>No viewer bundle was configured (start with <code>--ui-dir</code>).
Connect a websocket client to <code>/ws</code> to receive line-delimited JSON
<code>frame</code>, <code>stats</code> and <code>episode_end</code> messages and to send
<code>set_weights</code>, <code>pause</code>, <code>resume</code>, <code>set_speed</code> and <code>reset</code>.</p>
</body></html>
"#;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub checkpoints: Vec<PathBuf>,
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
    pub steps_per_sec: f64,
    pub window: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Initial weights per predator; cooperative when empty.
    pub weights: Vec<PreferenceVector>,
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            checkpoints: vec![],
            host: "127.0.0.1".into(),
            port: 8080,
            steps_per_sec: DEFAULT_STEPS_PER_SEC,
            window: DEFAULT_WINDOW,
            epsilon: 0.0,
            seed: 0,
            weights: vec![],
            ui_dir: None,
        }
    }
}

/// A running server; dropping it shuts everything down.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    mailbox: mpsc::Sender<Command>,
    http: Option<JoinHandle<()>>,
    sim: Option<JoinHandle<()>>,
}

impl ServerHandle {
    /// Blocks until the HTTP server exits.
    pub fn wait(mut self) {
        if let Some(h) = self.http.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = self.mailbox.send(Command::Shutdown);
        for h in [self.http.take(), self.sim.take()].into_iter().flatten() {
            let _ = h.join();
        }
    }
}

pub fn start(opts: &ServeOptions) -> CliResult<ServerHandle> {
    let loaded = load_policies(&opts.checkpoints)?;
    let mut session = Session::new(loaded.map, loaded.env, loaded.policies, opts.window, opts.seed)?;
    if !(0.0..=1.0).contains(&opts.epsilon) {
        return Err(CliError::usage("--epsilon must lie in [0, 1]"));
    }
    session.set_epsilon(opts.epsilon);
    session
        .apply(ClientMessage::SetSpeed { steps_per_sec: opts.steps_per_sec })
        .map_err(CliError::usage)?;
    let n = session.weights().len();
    let initial = match opts.weights.len() {
        0 => vec![],
        1 => vec![opts.weights[0]; n],
        k if k == n => opts.weights.clone(),
        k => return Err(CliError::usage(format!("{k} weight vectors for {n} predators"))),
    };
    for (agent, w) in initial.into_iter().enumerate() {
        session
            .apply(ClientMessage::SetWeights { agent, w: w.0 })
            .map_err(CliError::usage)?;
    }
    if let Some(dir) = &opts.ui_dir {
        if !dir.join("index.html").is_file() {
            return Err(CliError::usage(format!("{} has no index.html", dir.display())));
        }
    }

    let listener = std::net::TcpListener::bind((opts.host.as_str(), opts.port))
        .map_err(|e| CliError::usage(format!("cannot listen on {}:{}: {e}", opts.host, opts.port)))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let addr = listener.local_addr().map_err(|e| CliError::usage(e.to_string()))?;

    let (out, _) = broadcast::channel(1024);
    let (mailbox, inbox) = mpsc::channel();
    let sim_out = out.clone();
    let sim = std::thread::Builder::new()
        .name("simulation".into())
        .spawn(move || run_simulation(session, inbox, sim_out))
        .map_err(|e| CliError::usage(e.to_string()))?;

    let app = AppState { mailbox: mailbox.clone(), out };
    let mut router = Router::new()
        .route("/ws", get(ws_handler))
        .route("/health", get(|| async { "ok" }));
    router = match &opts.ui_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router.route("/", get(|| async { Html(PLACEHOLDER_PAGE) })),
    };
    let router = router.with_state(app);
    let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let http = std::thread::Builder::new()
        .name("http".into())
        .spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        warn!("listener setup failed: {e}");
                        return;
                    }
                };
                let server = axum::serve(listener, router).with_graceful_shutdown(async {
                    let _ = shutdown_rx.await;
                });
                if let Err(e) = server.await {
                    warn!("http server stopped: {e}");
                }
            })
        })
        .map_err(|e| CliError::usage(e.to_string()))?;
    info!("serving on http://{addr} (websocket at /ws)");
    Ok(ServerHandle {
        addr,
        shutdown: Some(shutdown_tx),
        mailbox,
        http: Some(http),
        sim: Some(sim),
    })
}
