use proptest::prelude::*;
use wolfpack_core::checkpoint::Checkpoint;
use wolfpack_core::env::{render, Action, EnvConfig, EnvState, FrameHistory};
use wolfpack_core::eval::{self, EvalSettings, Policy};
use wolfpack_core::replay::{Experience, ReplayMemory};
use wolfpack_core::trainer::{run_training, AgentSpec, RunOutput, Trainer, TrainingConfig};
use wolfpack_core::{GridMap, NetConfig, PreferenceSpace, PreferenceVector, RewardVector};

fn small_trainer(episodes: u64, seed: u64) -> Trainer {
    let map = GridMap::desk();
    let mut net = NetConfig::with_sizes(8, 8, 4, &[8, 8]);
    net.dropout = 0.2;
    let cfg = TrainingConfig {
        episodes,
        warmup_episodes: 2,
        batch_size: 16,
        updates_per_episode: 2,
        target_sync_steps: 100,
        seed,
        ..TrainingConfig::desk()
    };
    let specs = vec![AgentSpec::tunable(), AgentSpec::fixed(PreferenceVector::COMPETITIVE)];
    Trainer::new(&map, EnvConfig::default(), &net, specs, cfg).unwrap()
}

#[test]
fn short_run_writes_metrics_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let mut trainer = small_trainer(12, 7);
    let out = RunOutput { dir: dir.path().to_path_buf(), run_id: "short".into(), checkpoint_every: Some(5) };
    let summary = run_training(&mut trainer, &out).unwrap();
    assert_eq!(summary.episodes, 12);
    assert_eq!(summary.checkpoints, vec![out.checkpoint_path(0, 12), out.checkpoint_path(1, 12)]);
    // Episodes 5, 10 and the final 12, for two agents.
    let saved = std::fs::read_dir(out.run_dir())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".ckpt.json"))
        .count();
    assert_eq!(saved, 6);
    let csv = std::fs::read_to_string(&summary.metrics_path).unwrap();
    assert_eq!(csv.lines().count(), 1 + 12 * 2);
    for agent in trainer.agents() {
        assert!(agent.online.is_finite());
        assert!(agent.updates > 0);
        assert_eq!(agent.episodes, 12);
    }
    // The fixed agent only ever plays its one vector.
    for line in csv.lines().skip(1) {
        if line.split(',').nth(1) == Some("1") {
            assert!(line.contains("0.97,0"), "{line}");
        }
    }
}

#[test]
fn checkpoint_restores_parameters_and_optimizer() {
    let mut trainer = small_trainer(6, 1);
    while !trainer.is_finished() {
        trainer.run_episode().unwrap();
    }
    let ckpt = trainer.checkpoint(0, "restore");
    let back = Checkpoint::from_json(&ckpt.to_json().unwrap()).unwrap();
    let params = back.params().unwrap();
    assert_eq!(params.tensors(), trainer.agents()[0].online.tensors());
    let opt = back.optimizer(&params).unwrap().unwrap();
    assert_eq!(opt.step, trainer.agents()[0].opt.step);
    assert_eq!(opt.m, trainer.agents()[0].opt.m);
    assert_eq!(back.meta.episode, 6);
    assert_eq!(back.meta.preference_space, PreferenceSpace::training().candidates());
    assert_eq!(back.map().unwrap(), GridMap::desk());
}

#[test]
fn same_seed_trains_identically_and_different_seeds_diverge() {
    let run = |seed| {
        let mut t = small_trainer(5, seed);
        let mut metrics = vec![];
        while !t.is_finished() {
            metrics.extend(t.run_episode().unwrap());
        }
        (metrics, t.agents()[0].online.fingerprint())
    };
    let (a, b, c) = (run(3), run(3), run(4));
    assert_eq!(a, b);
    assert_ne!(a.1, c.1);
}

#[test]
fn evaluation_rates_partition_the_episodes() {
    let trainer = small_trainer(1, 2);
    let policy = Policy::new("p", trainer.agents()[0].online.clone());
    let settings = EvalSettings { episodes: 12, epsilon: 0.3, seed: 5, ..Default::default() };
    let grid = eval::weight_grid(3).unwrap();
    let result = eval::matched_sweep(&GridMap::desk(), &[&policy, &policy], &grid, &settings).unwrap();
    for p in &result.points {
        assert!((p.lone_rate + p.team_rate + p.none_rate - 1.0).abs() < 1e-12);
        assert!(p.lone_count + p.team_count <= p.episodes);
        assert!(p.mean_length >= 1.0 && p.mean_length <= 150.0);
    }
    let again = eval::matched_sweep(&GridMap::desk(), &[&policy, &policy], &grid, &settings).unwrap();
    assert_eq!(result, again);
}

fn experience(tag: u32) -> Experience {
    let state = EnvState::reset(&GridMap::desk(), 2, 0).unwrap();
    let mut h = FrameHistory::new();
    h.push(render(&state, 0));
    let obs = h.observe();
    Experience {
        obs: obs.clone(),
        action: Action::Stay,
        reward: RewardVector([f64::from(tag), 0.0, 0.0, 0.0]),
        next_obs: obs,
        prefs: PreferenceVector::COOPERATIVE,
        terminal: false,
    }
}

proptest! {
    #[test]
    fn replay_keeps_the_newest_in_insertion_order(capacity in 1usize..64, inserts in 0u32..200) {
        let mut memory = ReplayMemory::new(capacity);
        for i in 0..inserts {
            memory.push(experience(i));
        }
        let kept: Vec<f64> = memory.iter().map(|e| e.reward.0[0]).collect();
        let first = inserts.saturating_sub(capacity as u32);
        let want: Vec<f64> = (first..inserts).map(f64::from).collect();
        prop_assert_eq!(kept, want);
    }

    #[test]
    fn sampled_indices_are_distinct_and_in_range(len in 1u32..100, k in 1usize..100, seed in any::<u64>()) {
        let mut memory = ReplayMemory::new(128);
        for i in 0..len {
            memory.push(experience(i));
        }
        let mut r = wolfpack_core::rng::from_seed(seed);
        match memory.sample_indices(&mut r, k) {
            None => prop_assert!((len as usize) < k),
            Some(mut idx) => {
                prop_assert_eq!(idx.len(), k);
                idx.sort_unstable();
                idx.dedup();
                prop_assert_eq!(idx.len(), k);
                prop_assert!(idx.iter().all(|&i| i < len as usize));
            }
        }
    }
}
