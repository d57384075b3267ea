//! Tunable DQN training.
//!
//! Every episode each agent samples a preference vector from its own space
//! and keeps it for the whole episode. Transitions are stored with that
//! vector and the raw reward vector; after the warmup episodes each agent
//! takes one minibatch gradient step per finished episode. Target networks
//! are refreshed every `target_sync_steps` environment steps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::env::{
    render, Action, CaptureOutcome, EnvConfig, EnvState, FrameHistory, GridMap, Observation,
    RewardVector, NUM_ACTIONS,
};
use crate::error::{Error, Result};
use crate::prefs::{scalarize, PreferenceSpace, PreferenceVector};
use crate::qnet::{
    adam_step, copy_to_target, encode_prefs, loss_and_gradients, q_values, AdamConfig, Mode,
    NetConfig, OptState, QNetworkParams, TrainBatch,
};
use crate::replay::{Experience, ReplayMemory};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub episodes: u64,
    pub gamma: f64,
    pub epsilon_init: f64,
    /// Linear decrement applied after every episode.
    pub epsilon_decay: f64,
    pub epsilon_final: f64,
    pub batch_size: usize,
    /// Episodes to collect before the first gradient step.
    pub warmup_episodes: u64,
    /// Environment steps between target-network refreshes.
    pub target_sync_steps: u64,
    pub replay_capacity: usize,
    pub updates_per_episode: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl TrainingConfig {
    /// Full-scale settings: 80,000 episodes, ε decaying by 1/21,250 per episode.
    pub fn paper() -> Self {
        TrainingConfig {
            episodes: 80_000,
            gamma: 0.99,
            epsilon_init: 1.0,
            epsilon_decay: 1.0 / 21_250.0,
            epsilon_final: 0.01,
            batch_size: 64,
            warmup_episodes: 50,
            target_sync_steps: 1_000,
            replay_capacity: 6_000,
            updates_per_episode: 1,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }

    /// Short schedule for the 8×8 map: faster exploration decay, a higher
    /// learning rate and several minibatch updates per episode.
    pub fn desk() -> Self {
        TrainingConfig {
            episodes: 6_000,
            epsilon_decay: 1.0 / 3_000.0,
            updates_per_episode: 4,
            target_sync_steps: 500,
            adam: AdamConfig {
                learning_rate: 2.5e-4,
                ..AdamConfig::default()
            },
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma", self.gamma),
            ("epsilon_decay", self.epsilon_decay),
            ("learning_rate", self.adam.learning_rate),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| v.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) {
            return Err(Error::config(format!("{name} must be positive, got {v}")));
        }
        if self.gamma > 1.0 {
            return Err(Error::config("gamma must not exceed 1"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_init)
            || !(0.0..=1.0).contains(&self.epsilon_final)
            || self.epsilon_final > self.epsilon_init
        {
            return Err(Error::config(
                "epsilon values must satisfy 0 <= epsilon_final <= epsilon_init <= 1",
            ));
        }
        if self.batch_size == 0 || self.target_sync_steps == 0 || self.replay_capacity == 0 {
            return Err(Error::config(
                "batch_size, target_sync_steps and replay_capacity must be positive",
            ));
        }
        if self.batch_size > self.replay_capacity {
            return Err(Error::config("batch_size exceeds replay_capacity"));
        }
        Ok(())
    }

    /// ε after `episodes` completed episodes.
    pub fn epsilon_after(&self, episodes: u64) -> f64 {
        (self.epsilon_init - episodes as f64 * self.epsilon_decay).max(self.epsilon_final)
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self::paper()
    }
}

/// One linear decay step, clamped at the final value.
pub fn decay_epsilon(epsilon: f64, cfg: &TrainingConfig) -> f64 {
    (epsilon - cfg.epsilon_decay).max(cfg.epsilon_final)
}

/// Index of the largest value; ties go to the lowest index.
pub fn greedy_action(q: &[f32]) -> Action {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().take(NUM_ACTIONS) {
        if v > q[best] {
            best = i;
        }
    }
    Action::ALL[best]
}

/// ε-greedy selection where Q-values are only computed when exploiting.
pub fn epsilon_greedy_with<R, F>(epsilon: f64, rng: &mut R, q: F) -> Result<Action>
where
    R: Rng + ?Sized,
    F: FnOnce() -> Result<Vec<f32>>,
{
    if rng.random::<f64>() < epsilon {
        Ok(Action::ALL[rng.random_range(0..NUM_ACTIONS)])
    } else {
        Ok(greedy_action(&q()?))
    }
}

pub fn epsilon_greedy<R: Rng + ?Sized>(q: &[f32], epsilon: f64, rng: &mut R) -> Action {
    epsilon_greedy_with(epsilon, rng, || Ok(q.to_vec())).expect("infallible q source")
}

/// `r + γ·max_a Q'(s', a)`, or just `r` for terminal transitions.
pub fn bootstrap_target(scalar_reward: f64, max_next_q: f64, gamma: f64, terminal: bool) -> f64 {
    if terminal {
        scalar_reward
    } else {
        scalar_reward + gamma * max_next_q
    }
}

/// Regression targets for a minibatch. The stored preference vector both
/// scalarizes the reward and conditions the target network.
pub fn compute_targets(
    batch: &[&Experience],
    target: &QNetworkParams<f32>,
    gamma: f64,
) -> Result<Vec<f32>> {
    let config = target.config();
    let live: Vec<&Experience> = batch.iter().copied().filter(|e| !e.terminal).collect();
    let mut max_q = Vec::with_capacity(live.len());
    if !live.is_empty() {
        let mut obs = vec![0f32; live.len() * config.input_len()];
        let mut prefs = Vec::with_capacity(live.len() * 4);
        for (e, chunk) in live.iter().zip(obs.chunks_exact_mut(config.input_len())) {
            e.next_obs.write_rescaled(chunk);
            prefs.extend(encode_prefs::<f32>(config, &e.prefs)?);
        }
        let q = q_values(target, &obs, &prefs)?;
        max_q.extend(
            q.chunks_exact(config.outputs)
                .map(|row| row.iter().copied().fold(f32::NEG_INFINITY, f32::max)),
        );
    }
    let mut next = max_q.into_iter();
    Ok(batch
        .iter()
        .map(|e| {
            let r = scalarize(&e.reward, &e.prefs);
            let m = if e.terminal { 0.0 } else { f64::from(next.next().unwrap()) };
            bootstrap_target(r, m, gamma, e.terminal) as f32
        })
        .collect())
}

/// How one predator picks its preferences during training.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub space: PreferenceSpace,
    /// Overrides the seed derived from the master seed.
    pub seed: Option<u64>,
}

impl AgentSpec {
    pub fn tunable() -> Self {
        AgentSpec {
            space: PreferenceSpace::training(),
            seed: None,
        }
    }

    pub fn fixed(w: PreferenceVector) -> Self {
        AgentSpec {
            space: PreferenceSpace::fixed(w),
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

#[derive(Debug, Clone)]
struct AgentRngs {
    prefs: StreamRng,
    actions: StreamRng,
    dropout: StreamRng,
    sampling: StreamRng,
}

impl AgentRngs {
    fn new(seed: u64) -> Self {
        AgentRngs {
            prefs: rng::stream(seed, "prefs"),
            actions: rng::stream(seed, "actions"),
            dropout: rng::stream(seed, "dropout"),
            sampling: rng::stream(seed, "sampling"),
        }
    }
}

/// Everything one learning predator owns.
#[derive(Debug, Clone)]
pub struct AgentHandle {
    pub online: QNetworkParams<f32>,
    pub target: QNetworkParams<f32>,
    pub opt: OptState<f32>,
    pub memory: ReplayMemory,
    pub history: FrameHistory,
    pub epsilon: f64,
    pub space: PreferenceSpace,
    pub seed: u64,
    pub episodes: u64,
    pub env_steps: u64,
    pub target_syncs: u64,
    pub updates: u64,
    /// Minibatch indices of the most recent training step.
    pub last_batch: Vec<usize>,
    prefs: PreferenceVector,
    obs: Option<Observation>,
    episode_return: f64,
    rngs: AgentRngs,
}

impl AgentHandle {
    pub fn new(net: &NetConfig, space: PreferenceSpace, seed: u64, cfg: &TrainingConfig) -> Result<Self> {
        let online = QNetworkParams::init(net, rng::derive_seed(seed, "init"))?;
        Ok(AgentHandle {
            target: copy_to_target(&online),
            opt: OptState::new(&online, cfg.adam),
            online,
            memory: ReplayMemory::new(cfg.replay_capacity),
            history: FrameHistory::new(),
            epsilon: cfg.epsilon_init,
            prefs: space.candidates()[0],
            space,
            seed,
            episodes: 0,
            env_steps: 0,
            target_syncs: 0,
            updates: 0,
            last_batch: Vec::new(),
            obs: None,
            episode_return: 0.0,
            rngs: AgentRngs::new(seed),
        })
    }

    /// Preference vector of the current episode.
    pub fn preferences(&self) -> PreferenceVector {
        self.prefs
    }

    fn begin_episode(&mut self, state: &EnvState, viewer: usize) {
        self.prefs = self.space.sample(&mut self.rngs.prefs);
        self.history.clear();
        self.history.push(render(state, viewer));
        self.obs = Some(self.history.observe());
        self.episode_return = 0.0;
    }

    fn act(&mut self) -> Result<Action> {
        let obs = self.obs.as_ref().expect("episode started");
        let online = &self.online;
        let prefs = &self.prefs;
        epsilon_greedy_with(self.epsilon, &mut self.rngs.actions, || {
            q_values(
                online,
                &obs.rescaled::<f32>(),
                &encode_prefs::<f32>(online.config(), prefs)?,
            )
        })
    }

    fn record(
        &mut self,
        state: &EnvState,
        viewer: usize,
        action: Action,
        reward: RewardVector,
        cfg: &TrainingConfig,
    ) {
        self.history.push(render(state, viewer));
        let next = self.history.observe();
        let obs = self.obs.replace(next.clone()).expect("episode started");
        self.episode_return += scalarize(&reward, &self.prefs);
        self.memory.push(Experience {
            obs,
            action,
            reward,
            next_obs: next,
            prefs: self.prefs,
            terminal: state.is_done(),
        });
        self.env_steps += 1;
        if self.env_steps.is_multiple_of(cfg.target_sync_steps) {
            self.target = copy_to_target(&self.online);
            self.target_syncs += 1;
        }
    }

    fn end_episode(&mut self, cfg: &TrainingConfig) {
        self.episodes += 1;
        self.epsilon = cfg.epsilon_after(self.episodes);
    }
}

/// One minibatch update of the online network. Returns `None` (and skips the
/// update) while the memory holds fewer than `batch_size` experiences.
pub fn train_step(agent: &mut AgentHandle, cfg: &TrainingConfig) -> Result<Option<f32>> {
    let Some(indices) = agent.memory.sample_indices(&mut agent.rngs.sampling, cfg.batch_size) else {
        info!(
            "skipping update: replay memory holds {} < {} experiences",
            agent.memory.len(),
            cfg.batch_size
        );
        return Ok(None);
    };
    let batch: Vec<&Experience> = indices
        .iter()
        .map(|&i| agent.memory.get(i).expect("sampled index in range"))
        .collect();
    let targets = compute_targets(&batch, &agent.target, cfg.gamma)?;
    let config = agent.online.config();
    let input_len = config.input_len();
    let mut obs = vec![0f32; batch.len() * input_len];
    let mut prefs = Vec::with_capacity(batch.len() * 4);
    for (e, chunk) in batch.iter().zip(obs.chunks_exact_mut(input_len)) {
        e.obs.write_rescaled(chunk);
        prefs.extend(encode_prefs::<f32>(config, &e.prefs)?);
    }
    let train = TrainBatch {
        obs,
        prefs,
        actions: batch.iter().map(|e| e.action.index()).collect(),
        targets,
    };
    let (loss, grads) = loss_and_gradients(&agent.online, &train, Mode::Train, &mut agent.rngs.dropout)?;
    if !loss.is_finite() {
        return Err(Error::Training(format!(
            "non-finite loss {loss} at update {} (episode {}, targets {:?})",
            agent.updates + 1,
            agent.episodes,
            &train.targets[..train.targets.len().min(8)]
        )));
    }
    adam_step(&mut agent.online, &grads, &mut agent.opt)?;
    agent.updates += 1;
    agent.last_batch = indices;
    Ok(Some(loss))
}

/// Per-agent summary of one training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub agent: usize,
    pub prefs: PreferenceVector,
    pub scalar_return: f64,
    pub length: u32,
    pub capture: CaptureOutcome,
    /// ε in effect during the episode.
    pub epsilon: f64,
    pub loss: Option<f32>,
}

/// Drives episodes for two or three independently learning predators.
#[derive(Debug, Clone)]
pub struct Trainer {
    map: GridMap,
    env: EnvConfig,
    net: NetConfig,
    cfg: TrainingConfig,
    agents: Vec<AgentHandle>,
    env_rng: StreamRng,
    episode: u64,
}

impl Trainer {
    pub fn new(
        map: &GridMap,
        env: EnvConfig,
        net: &NetConfig,
        specs: Vec<AgentSpec>,
        cfg: TrainingConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        net.validate()?;
        if (net.input_height, net.input_width, net.input_channels) != (map.height(), map.width(), 9) {
            return Err(Error::config(format!(
                "network input {}x{}x{} does not match the {}x{} map with 9 stacked channels",
                net.input_height,
                net.input_width,
                net.input_channels,
                map.height(),
                map.width()
            )));
        }
        if !(2..=crate::env::MAX_PREDATORS).contains(&specs.len()) {
            return Err(Error::config("training needs two or three predators"));
        }
        let agents = specs
            .into_iter()
            .enumerate()
            .map(|(i, spec)| {
                let seed = spec
                    .seed
                    .unwrap_or_else(|| rng::derive_seed(cfg.seed, &format!("agent-{i}")));
                AgentHandle::new(net, spec.space, seed, &cfg)
            })
            .collect::<Result<_>>()?;
        Ok(Trainer {
            map: map.clone(),
            env,
            net: net.clone(),
            env_rng: rng::stream(cfg.seed, "env"),
            cfg,
            agents,
            episode: 0,
        })
    }

    pub fn agents(&self) -> &[AgentHandle] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [AgentHandle] {
        &mut self.agents
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.cfg
    }

    pub fn net(&self) -> &NetConfig {
        &self.net
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn env_config(&self) -> EnvConfig {
        self.env
    }

    /// Episodes completed so far.
    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn is_finished(&self) -> bool {
        self.episode >= self.cfg.episodes
    }

    /// Plays one episode, then decays ε and trains every agent.
    pub fn run_episode(&mut self) -> Result<Vec<EpisodeMetrics>> {
        let episode = self.episode + 1;
        let env_seed: u64 = self.env_rng.random();
        let mut state = EnvState::reset_with(&self.map, self.agents.len(), env_seed, self.env)?;
        for (i, agent) in self.agents.iter_mut().enumerate() {
            agent.begin_episode(&state, i);
        }
        while !state.is_done() {
            let actions = self
                .agents
                .iter_mut()
                .map(AgentHandle::act)
                .collect::<Result<Vec<_>>>()?;
            let out = state.step(&actions)?;
            for (i, agent) in self.agents.iter_mut().enumerate() {
                agent.record(&state, i, actions[i], out.rewards[i], &self.cfg);
            }
        }

        let mut metrics = Vec::with_capacity(self.agents.len());
        for (i, agent) in self.agents.iter_mut().enumerate() {
            let epsilon = agent.epsilon;
            agent.end_episode(&self.cfg);
            let mut loss = None;
            if episode > self.cfg.warmup_episodes {
                for _ in 0..self.cfg.updates_per_episode {
                    loss = train_step(agent, &self.cfg)?.or(loss);
                }
            }
            metrics.push(EpisodeMetrics {
                episode,
                agent: i,
                prefs: agent.prefs,
                scalar_return: agent.episode_return,
                length: state.t(),
                capture: state.capture(),
                epsilon,
                loss,
            });
        }
        if !self.agents.iter().all(|a| a.online.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite parameters after episode {episode}"
            )));
        }
        self.episode = episode;
        debug!("episode {episode}: {} in {} steps", state.capture(), state.t());
        Ok(metrics)
    }

    /// Checkpoint of agent `index` at the current episode.
    pub fn checkpoint(&self, index: usize, run_id: &str) -> Checkpoint {
        let agent = &self.agents[index];
        Checkpoint::new(
            &agent.online,
            Some(&agent.opt),
            CheckpointMeta {
                run_id: run_id.to_string(),
                agent: index,
                episode: self.episode,
                epsilon: agent.epsilon,
                env_steps: agent.env_steps,
                seed: agent.seed,
                preference_space: agent.space.candidates().to_vec(),
                map: self.map.to_rows(),
                env: self.env,
            },
        )
    }
}

/// Append-only CSV of per-episode, per-agent training metrics.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

pub const METRICS_HEADER: [&str; 11] = [
    "episode", "agent", "w_step", "w_wall", "w_lone", "w_team", "return", "length", "capture",
    "epsilon", "loss",
];

impl<W: Write> MetricsWriter<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(METRICS_HEADER)?;
        Ok(MetricsWriter { inner })
    }

    pub fn write(&mut self, m: &EpisodeMetrics) -> Result<()> {
        let [a, b, c, d] = m.prefs.0;
        self.inner.write_record([
            m.episode.to_string(),
            m.agent.to_string(),
            a.to_string(),
            b.to_string(),
            c.to_string(),
            d.to_string(),
            m.scalar_return.to_string(),
            m.length.to_string(),
            m.capture.to_string(),
            m.epsilon.to_string(),
            m.loss.map(|l| l.to_string()).unwrap_or_default(),
        ])?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner
            .flush()
            .map_err(|e| Error::io("<metrics>", e))
    }
}

/// Where a training run writes its artifacts.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub run_id: String,
    /// Save checkpoints every this many episodes (the final episode is always saved).
    pub checkpoint_every: Option<u64>,
}

impl RunOutput {
    pub fn run_dir(&self) -> PathBuf {
        self.dir.join(&self.run_id)
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.run_dir().join("metrics.csv")
    }

    pub fn checkpoint_path(&self, agent: usize, episode: u64) -> PathBuf {
        self.run_dir().join(checkpoint_file_name(agent, episode))
    }
}

pub fn checkpoint_file_name(agent: usize, episode: u64) -> String {
    format!("agent{agent}_ep{episode}.ckpt.json")
}

#[derive(Debug, Clone)]
pub struct TrainingSummary {
    pub episodes: u64,
    pub metrics_path: PathBuf,
    /// Final checkpoint of every agent.
    pub checkpoints: Vec<PathBuf>,
}

fn save_all(trainer: &Trainer, out: &RunOutput) -> Result<Vec<PathBuf>> {
    (0..trainer.agents().len())
        .map(|i| {
            let path = out.checkpoint_path(i, trainer.episode());
            trainer.checkpoint(i, &out.run_id).save(&path)?;
            Ok(path)
        })
        .collect()
}

/// Trains until the configured episode count, writing metrics and checkpoints.
pub fn run_training(trainer: &mut Trainer, out: &RunOutput) -> Result<TrainingSummary> {
    let dir = out.run_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let metrics_path = out.metrics_path();
    let file = fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut writer = MetricsWriter::new(std::io::BufWriter::new(file))?;
    let total = trainer.config().episodes;
    let mut checkpoints = Vec::new();
    while !trainer.is_finished() {
        for m in trainer.run_episode()? {
            writer.write(&m)?;
        }
        let ep = trainer.episode();
        if ep.is_multiple_of(500) || ep == total {
            info!("episode {ep}/{total}, epsilon {:.4}", trainer.agents()[0].epsilon);
        }
        let periodic = out.checkpoint_every.is_some_and(|k| k > 0 && ep.is_multiple_of(k));
        if periodic || ep == total {
            checkpoints = save_all(trainer, out)?;
        }
    }
    writer.flush()?;
    Ok(TrainingSummary {
        episodes: trainer.episode(),
        metrics_path,
        checkpoints,
    })
}

/// Writes a file atomically enough for run artifacts: parent dirs are created first.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
