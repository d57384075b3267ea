//! The multi-objective Wolfpack gridworld.
//!
//! Two or three predators chase a randomly moving prey on a grid with
//! obstacles. Every step each predator receives a four-element reward vector
//! `[step, wall, lone, team]`. Moves are simultaneous and agents never block
//! each other; capture is checked on post-move positions.

mod log;
mod map;
mod render;

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

pub use self::log::{EpisodeLog, StepRecord};
pub use self::map::{GridMap, Pos, DESK8, WOLFPACK16};
pub use self::render::{
    grid_codes, observe, render, Color, Frame, FrameHistory, Observation, COLOR_EMPTY,
    COLOR_OBSTACLE, COLOR_OTHER, COLOR_PREY, COLOR_SELF, FRAME_STACK,
};

pub const MAX_PREDATORS: usize = 3;
pub const NUM_ACTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Stay = 0,
    Up = 1,
    Down = 2,
    Left = 3,
    Right = 4,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] =
        [Action::Stay, Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn delta(self) -> (i32, i32) {
        match self {
            Action::Stay => (0, 0),
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }
}

/// Per-step reward for one predator, ordered `[step, wall, lone, team]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardVector(pub [f64; 4]);

impl RewardVector {
    pub fn step(&self) -> f64 {
        self.0[0]
    }
    pub fn wall(&self) -> f64 {
        self.0[1]
    }
    pub fn lone(&self) -> f64 {
        self.0[2]
    }
    pub fn team(&self) -> f64 {
        self.0[3]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }
}

impl std::ops::AddAssign for RewardVector {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

/// Small set of predator indices, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct AgentSet(u8);

impl AgentSet {
    pub fn insert(&mut self, agent: usize) {
        self.0 |= 1 << agent;
    }

    pub fn contains(&self, agent: usize) -> bool {
        agent < 8 && self.0 & (1 << agent) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..8).filter(move |&i| self.contains(i))
    }
}

impl FromIterator<usize> for AgentSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = AgentSet::default();
        for i in iter {
            s.insert(i);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CaptureOutcome {
    #[default]
    None,
    Lone(usize),
    Team(AgentSet),
}

impl CaptureOutcome {
    pub fn kind(&self) -> CaptureKind {
        match self {
            CaptureOutcome::None => CaptureKind::None,
            CaptureOutcome::Lone(_) => CaptureKind::Lone,
            CaptureOutcome::Team(_) => CaptureKind::Team,
        }
    }

    pub fn is_capture(&self) -> bool {
        !matches!(self, CaptureOutcome::None)
    }

    /// Reward vector earned by `agent` from this outcome on the step it occurs.
    pub fn lone_team_for(&self, agent: usize) -> (f64, f64) {
        match *self {
            CaptureOutcome::Lone(a) if a == agent => (1.0, 0.0),
            CaptureOutcome::Team(set) if set.contains(agent) => (0.0, 1.0),
            _ => (0.0, 0.0),
        }
    }
}

/// Text form used in logs: `none`, `lone:0`, `team:0+1`.
impl fmt::Display for CaptureOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaptureOutcome::None => f.write_str("none"),
            CaptureOutcome::Lone(a) => write!(f, "lone:{a}"),
            CaptureOutcome::Team(set) => {
                f.write_str("team:")?;
                let ids: Vec<String> = set.iter().map(|i| i.to_string()).collect();
                f.write_str(&ids.join("+"))
            }
        }
    }
}

impl FromStr for CaptureOutcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::usage(format!("malformed capture outcome {s:?}"));
        if s == "none" {
            return Ok(CaptureOutcome::None);
        }
        if let Some(rest) = s.strip_prefix("lone:") {
            return rest.parse().map(CaptureOutcome::Lone).map_err(|_| bad());
        }
        if let Some(rest) = s.strip_prefix("team:") {
            let ids = rest
                .split('+')
                .map(|t| t.parse::<usize>().ok().filter(|&i| i < 8))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(bad)?;
            return Ok(CaptureOutcome::Team(ids.into_iter().collect()));
        }
        Err(bad())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptureKind {
    None,
    Lone,
    Team,
}

impl CaptureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CaptureKind::None => "none",
            CaptureKind::Lone => "lone",
            CaptureKind::Team => "team",
        }
    }
}

impl fmt::Display for CaptureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub max_steps: u32,
    pub capture_radius: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            max_steps: 150,
            capture_radius: 3,
        }
    }
}

/// Moves `pos` by `action`; blocked moves leave the agent in place and report a wall hit.
pub fn apply_move(pos: Pos, action: Action, map: &GridMap) -> (Pos, bool) {
    if action == Action::Stay {
        return (pos, false);
    }
    let (dx, dy) = action.delta();
    let target = Pos::new(pos.x + dx, pos.y + dy);
    if map.is_free(target) {
        (target, false)
    } else {
        (pos, true)
    }
}

/// Classifies the capture situation for the given post-move positions.
///
/// Any predator standing on the prey captures it. Every predator within
/// `radius` (Manhattan) of the prey, the capturer included, takes part; two
/// or more participants make it a team capture.
pub fn classify_capture(predators: &[Pos], prey: Pos, radius: u32) -> CaptureOutcome {
    let Some(capturer) = predators.iter().position(|&p| p == prey) else {
        return CaptureOutcome::None;
    };
    let members: AgentSet = predators
        .iter()
        .enumerate()
        .filter(|(_, p)| p.manhattan(prey) <= radius)
        .map(|(i, _)| i)
        .collect();
    if members.len() >= 2 {
        CaptureOutcome::Team(members)
    } else {
        CaptureOutcome::Lone(capturer)
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<RewardVector>,
    pub prey_action: Action,
    pub done: bool,
}

/// Full simulator state. Owns its random stream (used only for the prey).
#[derive(Debug, Clone)]
pub struct EnvState {
    map: GridMap,
    config: EnvConfig,
    predators: Vec<Pos>,
    prey: Pos,
    t: u32,
    done: bool,
    capture: CaptureOutcome,
    rng: StreamRng,
}

impl EnvState {
    /// Starts an episode with predators and prey on distinct random free cells.
    pub fn reset(map: &GridMap, num_predators: usize, seed: u64) -> Result<Self> {
        Self::reset_with(map, num_predators, seed, EnvConfig::default())
    }

    pub fn reset_with(
        map: &GridMap,
        num_predators: usize,
        seed: u64,
        config: EnvConfig,
    ) -> Result<Self> {
        if !(1..=MAX_PREDATORS).contains(&num_predators) {
            return Err(Error::config(format!(
                "num_predators must be between 1 and {MAX_PREDATORS}, got {num_predators}"
            )));
        }
        if config.max_steps == 0 {
            return Err(Error::config("max_steps must be positive"));
        }
        let free = map.free_cells();
        let needed = num_predators + 1;
        if free.len() < needed {
            return Err(Error::config(format!(
                "map has {} free cells but {needed} agents must spawn",
                free.len()
            )));
        }
        let mut rng = rng::from_seed(seed);
        let picks = index::sample(&mut rng, free.len(), needed);
        let mut cells = picks.iter().map(|i| free[i]);
        let predators: Vec<Pos> = cells.by_ref().take(num_predators).collect();
        let prey = cells.next().expect("sampled num_predators + 1 cells");
        Ok(EnvState {
            map: map.clone(),
            config,
            predators,
            prey,
            t: 0,
            done: false,
            capture: CaptureOutcome::None,
            rng,
        })
    }

    /// Builds a state at explicit positions; used by tests and replay tooling.
    pub fn from_positions(
        map: &GridMap,
        predators: Vec<Pos>,
        prey: Pos,
        seed: u64,
        config: EnvConfig,
    ) -> Result<Self> {
        if predators.is_empty() || predators.len() > MAX_PREDATORS {
            return Err(Error::config("between 1 and 3 predators required"));
        }
        for &p in predators.iter().chain(std::iter::once(&prey)) {
            if !map.is_free(p) {
                return Err(Error::config(format!("agent position {p} is not a free cell")));
            }
        }
        Ok(EnvState {
            map: map.clone(),
            config,
            predators,
            prey,
            t: 0,
            done: false,
            capture: CaptureOutcome::None,
            rng: rng::from_seed(seed),
        })
    }

    /// Advances all agents simultaneously; the prey acts uniformly at random.
    pub fn step(&mut self, actions: &[Action]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::usage("step called on a finished episode"));
        }
        if actions.len() != self.predators.len() {
            return Err(Error::usage(format!(
                "expected {} predator actions, got {}",
                self.predators.len(),
                actions.len()
            )));
        }
        let prey_action = Action::ALL[self.rng.random_range(0..NUM_ACTIONS)];

        let mut wall_hits = Vec::with_capacity(actions.len());
        for (pos, &a) in self.predators.iter_mut().zip(actions) {
            let (next, hit) = apply_move(*pos, a, &self.map);
            *pos = next;
            wall_hits.push(hit);
        }
        self.prey = apply_move(self.prey, prey_action, &self.map).0;
        self.t += 1;

        self.capture = classify_capture(&self.predators, self.prey, self.config.capture_radius);
        self.done = self.capture.is_capture() || self.t >= self.config.max_steps;

        let rewards = wall_hits
            .iter()
            .enumerate()
            .map(|(i, &hit)| {
                let (lone, team) = self.capture.lone_team_for(i);
                RewardVector([-1.0, if hit { -1.0 } else { 0.0 }, lone, team])
            })
            .collect();
        Ok(StepOutcome {
            rewards,
            prey_action,
            done: self.done,
        })
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn config(&self) -> EnvConfig {
        self.config
    }

    pub fn predators(&self) -> &[Pos] {
        &self.predators
    }

    pub fn num_predators(&self) -> usize {
        self.predators.len()
    }

    pub fn prey(&self) -> Pos {
        self.prey
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn capture(&self) -> CaptureOutcome {
        self.capture
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn team(ids: &[usize]) -> CaptureOutcome {
        CaptureOutcome::Team(ids.iter().copied().collect())
    }

    fn open16() -> GridMap {
        GridMap::empty(16, 16).unwrap()
    }

    #[test]
    fn reset_is_deterministic() {
        let map = GridMap::canonical();
        let a = EnvState::reset(&map, 2, 42).unwrap();
        let b = EnvState::reset(&map, 2, 42).unwrap();
        assert_eq!(a.predators(), b.predators());
        assert_eq!(a.prey(), b.prey());
    }

    #[test]
    fn reset_spawns_on_distinct_free_cells() {
        let map = GridMap::canonical();
        for seed in 0..200 {
            let s = EnvState::reset(&map, 2, seed).unwrap();
            let mut all = s.predators().to_vec();
            all.push(s.prey());
            assert_eq!(all.len(), 3);
            assert!(all.iter().all(|&p| map.is_free(p)));
            all.sort();
            all.dedup();
            assert_eq!(all.len(), 3, "spawn cells must be distinct");
            assert_eq!(s.t(), 0);
            assert!(!s.is_done());
        }
    }

    #[test]
    fn reset_fills_a_tiny_map() {
        let map = GridMap::empty(2, 2).unwrap();
        let s = EnvState::reset(&map, 3, 1).unwrap();
        let mut all = s.predators().to_vec();
        all.push(s.prey());
        all.sort();
        let mut free = map.free_cells();
        free.sort();
        assert_eq!(all, free);
    }

    #[test]
    fn reset_rejects_crowded_map() {
        let map = GridMap::with_obstacles(2, 2, [Pos::new(0, 0)]).unwrap();
        assert!(matches!(
            EnvState::reset(&map, 3, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn moves_and_walls() {
        let map = GridMap::with_obstacles(16, 16, [Pos::new(3, 3)]).unwrap();
        assert_eq!(apply_move(Pos::new(0, 0), Action::Left, &map), (Pos::new(0, 0), true));
        assert_eq!(apply_move(Pos::new(0, 0), Action::Up, &map), (Pos::new(0, 0), true));
        assert_eq!(apply_move(Pos::new(5, 5), Action::Stay, &map), (Pos::new(5, 5), false));
        assert_eq!(apply_move(Pos::new(3, 4), Action::Up, &map), (Pos::new(3, 4), true));
        assert_eq!(apply_move(Pos::new(3, 4), Action::Down, &map), (Pos::new(3, 5), false));
        assert_eq!(apply_move(Pos::new(15, 2), Action::Right, &map), (Pos::new(15, 2), true));
    }

    #[test]
    fn capture_classification_examples() {
        let r = 3;
        assert_eq!(
            classify_capture(&[Pos::new(2, 2), Pos::new(9, 9)], Pos::new(5, 5), r),
            CaptureOutcome::None
        );
        assert_eq!(
            classify_capture(&[Pos::new(5, 5), Pos::new(6, 7)], Pos::new(5, 5), r),
            team(&[0, 1])
        );
        assert_eq!(
            classify_capture(&[Pos::new(5, 5), Pos::new(6, 8)], Pos::new(5, 5), r),
            CaptureOutcome::Lone(0)
        );
        assert_eq!(
            classify_capture(
                &[Pos::new(5, 5), Pos::new(5, 6), Pos::new(12, 12)],
                Pos::new(5, 5),
                r
            ),
            team(&[0, 1])
        );
        // second predator is the capturer
        assert_eq!(
            classify_capture(&[Pos::new(0, 0), Pos::new(5, 5)], Pos::new(5, 5), r),
            CaptureOutcome::Lone(1)
        );
    }

    fn step_to(predators: [Pos; 2], actions: [Action; 2], prey: Pos) -> (EnvState, StepOutcome) {
        // Obstacles enclose the prey so that every prey action keeps it in place.
        let map = GridMap::with_obstacles(16, 16, [Pos::new(5, 4), Pos::new(4, 5)]).unwrap();
        for seed in 0..64 {
            let mut s = EnvState::from_positions(&map, predators.to_vec(), prey, seed, EnvConfig::default())
                .unwrap();
            let out = s.step(&actions).unwrap();
            if s.prey() == prey {
                return (s, out);
            }
        }
        panic!("no seed kept the prey in place");
    }

    #[test]
    fn plain_step_rewards() {
        let map = open16();
        let mut s = EnvState::from_positions(
            &map,
            vec![Pos::new(1, 1), Pos::new(10, 10)],
            Pos::new(14, 1),
            3,
            EnvConfig::default(),
        )
        .unwrap();
        let out = s.step(&[Action::Right, Action::Down]).unwrap();
        assert_eq!(out.rewards, vec![RewardVector([-1.0, 0.0, 0.0, 0.0]); 2]);
        assert!(!out.done);
        assert_eq!(s.t(), 1);
    }

    #[test]
    fn team_capture_rewards_both() {
        // predator 0 steps onto the prey at (5,5); predator 1 ends at distance 2.
        let (s, out) = step_to(
            [Pos::new(5, 6), Pos::new(6, 6)],
            [Action::Up, Action::Stay],
            Pos::new(5, 5),
        );
        assert!(out.done);
        assert_eq!(out.rewards[0].0[2..], [0.0, 1.0]);
        assert_eq!(out.rewards[1].0[2..], [0.0, 1.0]);
        assert_eq!(s.capture(), team(&[0, 1]));
    }

    #[test]
    fn lone_capture_rewards_capturer_only() {
        // predator 1 ends at distance 4
        let (s, out) = step_to(
            [Pos::new(5, 6), Pos::new(7, 7)],
            [Action::Up, Action::Stay],
            Pos::new(5, 5),
        );
        assert!(out.done);
        assert_eq!(out.rewards[0].0, [-1.0, 0.0, 1.0, 0.0]);
        assert_eq!(out.rewards[1].0, [-1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.capture(), CaptureOutcome::Lone(0));
    }

    #[test]
    fn timeout_without_capture() {
        // prey boxed in a corner cell it cannot leave, predators far away
        let map = GridMap::with_obstacles(5, 5, [Pos::new(3, 4), Pos::new(4, 3)]).unwrap();
        let mut s = EnvState::from_positions(
            &map,
            vec![Pos::new(0, 0), Pos::new(1, 0)],
            Pos::new(4, 4),
            9,
            EnvConfig::default(),
        )
        .unwrap();
        let mut last = None;
        while !s.is_done() {
            last = Some(s.step(&[Action::Stay, Action::Stay]).unwrap());
        }
        assert!(last.unwrap().done);
        assert_eq!(s.t(), 150);
        assert_eq!(s.capture(), CaptureOutcome::None);
        assert!(matches!(s.step(&[Action::Stay, Action::Stay]), Err(Error::Usage(_))));
    }

    #[test]
    fn wall_hit_is_recorded_per_predator() {
        let map = open16();
        let mut s = EnvState::from_positions(
            &map,
            vec![Pos::new(0, 0), Pos::new(10, 10)],
            Pos::new(14, 14),
            1,
            EnvConfig::default(),
        )
        .unwrap();
        let out = s.step(&[Action::Left, Action::Left]).unwrap();
        assert_eq!(out.rewards[0].wall(), -1.0);
        assert_eq!(out.rewards[1].wall(), 0.0);
    }

    #[test]
    fn capture_text_round_trip() {
        for c in [CaptureOutcome::None, CaptureOutcome::Lone(2), team(&[0, 2])] {
            assert_eq!(c.to_string().parse::<CaptureOutcome>().unwrap(), c);
        }
        assert!("team:".parse::<CaptureOutcome>().is_err());
        assert!("solo:1".parse::<CaptureOutcome>().is_err());
    }
}
