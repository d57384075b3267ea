//! Evaluation protocols over trained checkpoints: matched-preference sweeps,
//! varied-preference heatmaps, three-predator sweeps and empirical payoff
//! matrices.
//!
//! Every episode gets its own seed derived from `(base_seed, point, episode)`,
//! so results do not depend on execution order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{
    render, CaptureKind, CaptureOutcome, EnvConfig, EnvState, EpisodeLog, FrameHistory, GridMap,
    RewardVector, StepRecord,
};
use crate::error::{Error, Result};
use crate::prefs::{lone_grid, PreferenceVector};
use crate::qnet::{encode_prefs, q_values, QNetworkParams};
use crate::rng;
use crate::trainer::epsilon_greedy_with;

/// Episodes per evaluation point unless configured otherwise.
pub const DEFAULT_EPISODES: usize = 250;

/// A frozen network used to act greedily (or near-greedily) during evaluation.
#[derive(Debug, Clone)]
pub struct Policy {
    pub name: String,
    pub params: QNetworkParams<f32>,
}

impl Policy {
    pub fn new(name: impl Into<String>, params: QNetworkParams<f32>) -> Self {
        Policy {
            name: name.into(),
            params,
        }
    }

    pub fn fingerprint(&self) -> String {
        self.params.fingerprint()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub episodes: usize,
    /// Exploration during evaluation; 0 is fully greedy.
    pub epsilon: f64,
    pub seed: u64,
    pub env: EnvConfig,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            episodes: DEFAULT_EPISODES,
            epsilon: 0.0,
            seed: 0,
            env: EnvConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub capture: CaptureKind,
    /// The lone capturer, or every team-capture participant.
    pub capturers: Vec<usize>,
    pub length: u32,
    /// Per-predator summed reward vectors.
    pub returns: Vec<[f64; 4]>,
}

impl EpisodeStats {
    fn from_outcome(outcome: CaptureOutcome, length: u32, returns: Vec<RewardVector>) -> Self {
        let capturers = match outcome {
            CaptureOutcome::None => vec![],
            CaptureOutcome::Lone(a) => vec![a],
            CaptureOutcome::Team(set) => set.iter().collect(),
        };
        EpisodeStats {
            capture: outcome.kind(),
            capturers,
            length,
            returns: returns.into_iter().map(|r| r.0).collect(),
        }
    }
}

pub fn episode_seed(base: u64, point: u64, episode: u64) -> u64 {
    rng::mix_seed(&[base, point, episode])
}

fn check_setup(map: &GridMap, policies: &[&Policy], weights: &[PreferenceVector]) -> Result<()> {
    if policies.len() != weights.len() {
        return Err(Error::usage(format!(
            "{} policies but {} weight vectors",
            policies.len(),
            weights.len()
        )));
    }
    for p in policies {
        let net = p.params.config();
        if (net.input_height, net.input_width) != (map.height(), map.width()) {
            return Err(Error::Checkpoint(format!(
                "{}: network expects a {}x{} map, evaluation map is {}x{}",
                p.name,
                net.input_height,
                net.input_width,
                map.height(),
                map.width()
            )));
        }
    }
    for w in weights {
        PreferenceVector::new(w.0)?;
    }
    Ok(())
}

/// Plays one evaluation episode; optionally records a step log.
pub fn play_episode(
    map: &GridMap,
    policies: &[&Policy],
    weights: &[PreferenceVector],
    epsilon: f64,
    seed: u64,
    env: EnvConfig,
    mut log: Option<&mut EpisodeLog>,
) -> Result<EpisodeStats> {
    check_setup(map, policies, weights)?;
    let n = policies.len();
    let mut state = EnvState::reset_with(map, n, rng::derive_seed(seed, "env"), env)?;
    let mut action_rng = rng::stream(seed, "eval-actions");
    let encoded = policies
        .iter()
        .zip(weights)
        .map(|(p, w)| encode_prefs::<f32>(p.params.config(), w))
        .collect::<Result<Vec<_>>>()?;
    let mut histories: Vec<FrameHistory> = (0..n)
        .map(|i| {
            let mut h = FrameHistory::new();
            h.push(render(&state, i));
            h
        })
        .collect();
    let mut returns = vec![RewardVector::default(); n];
    while !state.is_done() {
        let mut actions = Vec::with_capacity(n);
        for i in 0..n {
            let obs = histories[i].observe();
            let params = &policies[i].params;
            let a = epsilon_greedy_with(epsilon, &mut action_rng, || {
                q_values(params, &obs.rescaled::<f32>(), &encoded[i])
            })?;
            actions.push(a);
        }
        let out = state.step(&actions)?;
        for (i, h) in histories.iter_mut().enumerate() {
            h.push(render(&state, i));
            returns[i] += out.rewards[i];
        }
        if let Some(log) = log.as_deref_mut() {
            log.push(StepRecord {
                t: state.t(),
                prey: state.prey(),
                prey_action: out.prey_action,
                predators: state.predators().to_vec(),
                actions,
                rewards: out.rewards,
                capture: state.capture(),
            });
        }
    }
    Ok(EpisodeStats::from_outcome(state.capture(), state.t(), returns))
}

/// `settings.episodes` episodes with fixed per-predator weights.
pub fn run_episodes(
    map: &GridMap,
    policies: &[&Policy],
    weights: &[PreferenceVector],
    settings: &EvalSettings,
    point: u64,
) -> Result<Vec<EpisodeStats>> {
    check_setup(map, policies, weights)?;
    (0..settings.episodes as u64)
        .map(|ep| {
            play_episode(
                map,
                policies,
                weights,
                settings.epsilon,
                episode_seed(settings.seed, point, ep),
                settings.env,
                None,
            )
        })
        .collect()
}

/// Capture rates at one evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub weights: Vec<PreferenceVector>,
    pub lone_rate: f64,
    pub team_rate: f64,
    pub none_rate: f64,
    pub mean_length: f64,
    pub episodes: usize,
    pub lone_count: usize,
    pub team_count: usize,
}

impl SweepPoint {
    pub fn aggregate(weights: Vec<PreferenceVector>, stats: &[EpisodeStats]) -> Result<Self> {
        if stats.is_empty() {
            return Err(Error::usage("capture rates are undefined for zero episodes"));
        }
        let n = stats.len();
        let count = |k: CaptureKind| stats.iter().filter(|s| s.capture == k).count();
        let (lone, team) = (count(CaptureKind::Lone), count(CaptureKind::Team));
        let none = n - lone - team;
        let nf = n as f64;
        Ok(SweepPoint {
            weights,
            lone_rate: lone as f64 / nf,
            team_rate: team as f64 / nf,
            none_rate: none as f64 / nf,
            mean_length: stats.iter().map(|s| f64::from(s.length)).sum::<f64>() / nf,
            episodes: n,
            lone_count: lone,
            team_count: team,
        })
    }

    /// Team-capture weight shared by all predators at this point.
    pub fn w_team(&self) -> f64 {
        self.weights[0].team()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub predators: usize,
    pub settings: EvalSettings,
    pub policies: Vec<String>,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn team_rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.team_rate).collect()
    }

    pub fn lone_rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lone_rate).collect()
    }
}

/// Evaluation grid of preference vectors: `points` lone-capture weights
/// evenly spaced on `[0, 0.97]`.
pub fn weight_grid(points: usize) -> Result<Vec<PreferenceVector>> {
    lone_grid(points)?
        .into_iter()
        .map(PreferenceVector::from_lone)
        .collect()
}

/// Every predator shares the weight vector of each grid point.
pub fn matched_sweep(
    map: &GridMap,
    policies: &[&Policy],
    grid: &[PreferenceVector],
    settings: &EvalSettings,
) -> Result<SweepResult> {
    let points = grid
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let weights = vec![w; policies.len()];
            let stats = run_episodes(map, policies, &weights, settings, i as u64)?;
            SweepPoint::aggregate(weights, &stats)
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult {
        predators: policies.len(),
        settings: *settings,
        policies: policies.iter().map(|p| p.name.clone()).collect(),
        points,
    })
}

/// Matched sweep with three predators, e.g. two tunable agents plus one
/// trained with a different seed.
pub fn three_predator_sweep(
    map: &GridMap,
    policies: [&Policy; 3],
    grid: &[PreferenceVector],
    settings: &EvalSettings,
) -> Result<SweepResult> {
    matched_sweep(map, &policies, grid, settings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub settings: EvalSettings,
    pub policies: Vec<String>,
    pub grid_a: Vec<PreferenceVector>,
    pub grid_b: Vec<PreferenceVector>,
    /// `team_rate[i][j]`: predator 0 uses `grid_a[i]`, predator 1 uses `grid_b[j]`.
    pub team_rate: Vec<Vec<f64>>,
    pub lone_rate: Vec<Vec<f64>>,
}

pub fn varied_heatmap(
    map: &GridMap,
    policies: [&Policy; 2],
    grid_a: &[PreferenceVector],
    grid_b: &[PreferenceVector],
    settings: &EvalSettings,
) -> Result<Heatmap> {
    let mut team_rate = vec![vec![0.0; grid_b.len()]; grid_a.len()];
    let mut lone_rate = team_rate.clone();
    for (i, &wa) in grid_a.iter().enumerate() {
        for (j, &wb) in grid_b.iter().enumerate() {
            let point = (i * grid_b.len() + j) as u64;
            let weights = vec![wa, wb];
            let stats = run_episodes(map, &policies, &weights, settings, point)?;
            let p = SweepPoint::aggregate(weights, &stats)?;
            team_rate[i][j] = p.team_rate;
            lone_rate[i][j] = p.lone_rate;
        }
    }
    Ok(Heatmap {
        settings: *settings,
        policies: policies.iter().map(|p| p.name.clone()).collect(),
        grid_a: grid_a.to_vec(),
        grid_b: grid_b.to_vec(),
        team_rate,
        lone_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    Cooperate,
    Defect,
}

impl Stance {
    pub const BOTH: [Stance; 2] = [Stance::Cooperate, Stance::Defect];

    pub fn weights(self) -> PreferenceVector {
        match self {
            Stance::Cooperate => PreferenceVector::COOPERATIVE,
            Stance::Defect => PreferenceVector::COMPETITIVE,
        }
    }
}

/// Capture rate counted as payoff for `agent` playing `stance`: team captures
/// it took part in when cooperating, its own lone captures when defecting.
pub fn stance_payoff(stats: &[EpisodeStats], agent: usize, stance: Stance) -> f64 {
    let hits = stats
        .iter()
        .filter(|s| match stance {
            Stance::Cooperate => s.capture == CaptureKind::Team && s.capturers.contains(&agent),
            Stance::Defect => s.capture == CaptureKind::Lone && s.capturers == [agent],
        })
        .count();
    hits as f64 / stats.len() as f64
}

/// Empirical 2×2 game between a row and a column agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub settings: EvalSettings,
    pub stances: [Stance; 2],
    /// `row_payoff[i][j]`: row agent's payoff when it plays `stances[i]` and
    /// the column agent plays `stances[j]`.
    pub row_payoff: [[f64; 2]; 2],
    pub col_payoff: [[f64; 2]; 2],
    pub row_policy: String,
    pub col_policy: String,
    /// Both sides run an identical network.
    pub same_model: bool,
}

pub fn payoff_matrix(
    map: &GridMap,
    row: &Policy,
    col: &Policy,
    settings: &EvalSettings,
) -> Result<PayoffMatrix> {
    let mut row_payoff = [[0.0; 2]; 2];
    let mut col_payoff = [[0.0; 2]; 2];
    for (i, rs) in Stance::BOTH.into_iter().enumerate() {
        for (j, cs) in Stance::BOTH.into_iter().enumerate() {
            let weights = [rs.weights(), cs.weights()];
            let stats = run_episodes(map, &[row, col], &weights, settings, (2 * i + j) as u64)?;
            if stats.is_empty() {
                return Err(Error::usage("payoff matrix needs at least one episode"));
            }
            row_payoff[i][j] = stance_payoff(&stats, 0, rs);
            col_payoff[i][j] = stance_payoff(&stats, 1, cs);
        }
    }
    Ok(PayoffMatrix {
        settings: *settings,
        stances: Stance::BOTH,
        row_payoff,
        col_payoff,
        row_policy: row.name.clone(),
        col_policy: col.name.clone(),
        same_model: row.fingerprint() == col.fingerprint(),
    })
}

/// Mean of a slice; NaN when empty.
pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Draws a uniformly random action for every predator; handy for baselines.
pub fn random_policy_episode<R: Rng>(
    map: &GridMap,
    predators: usize,
    env: EnvConfig,
    seed: u64,
    rng: &mut R,
) -> Result<(EpisodeLog, EpisodeStats)> {
    let mut state = EnvState::reset_with(map, predators, seed, env)?;
    let mut log = EpisodeLog::default();
    let mut returns = vec![RewardVector::default(); predators];
    while !state.is_done() {
        let actions: Vec<_> = (0..predators)
            .map(|_| crate::env::Action::ALL[rng.random_range(0..crate::env::NUM_ACTIONS)])
            .collect();
        let out = state.step(&actions)?;
        for (r, o) in returns.iter_mut().zip(&out.rewards) {
            *r += *o;
        }
        log.push(StepRecord {
            t: state.t(),
            prey: state.prey(),
            prey_action: out.prey_action,
            predators: state.predators().to_vec(),
            actions,
            rewards: out.rewards,
            capture: state.capture(),
        });
    }
    Ok((log, EpisodeStats::from_outcome(state.capture(), state.t(), returns)))
}
