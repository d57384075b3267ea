//! Preference weights and linear scalarization of reward vectors.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::RewardVector;
use crate::error::{Error, Result};

pub const STEP_WEIGHT: f64 = 0.005;
pub const WALL_WEIGHT: f64 = 0.025;
/// Weight mass shared between the lone- and team-capture objectives.
pub const CAPTURE_MASS: f64 = 0.97;

/// Objective weights ordered `[step, wall, lone, team]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PreferenceVector(pub [f64; 4]);

impl PreferenceVector {
    pub const COOPERATIVE: PreferenceVector =
        PreferenceVector([STEP_WEIGHT, WALL_WEIGHT, 0.0, CAPTURE_MASS]);
    pub const COMPETITIVE: PreferenceVector =
        PreferenceVector([STEP_WEIGHT, WALL_WEIGHT, CAPTURE_MASS, 0.0]);

    /// Builds a vector from checked components (each must lie in `[0, 1]`).
    pub fn new(w: [f64; 4]) -> Result<Self> {
        if let Some(bad) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::usage(format!(
                "preference component {bad} outside [0, 1]"
            )));
        }
        Ok(PreferenceVector(w))
    }

    /// The standard one-parameter family: fixed step/wall weights, `team = 0.97 - lone`.
    pub fn from_lone(w_lone: f64) -> Result<Self> {
        if !(0.0..=CAPTURE_MASS).contains(&w_lone) {
            return Err(Error::usage(format!(
                "lone-capture weight {w_lone} outside [0, {CAPTURE_MASS}]"
            )));
        }
        Ok(PreferenceVector([
            STEP_WEIGHT,
            WALL_WEIGHT,
            w_lone,
            CAPTURE_MASS - w_lone,
        ]))
    }

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

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl fmt::Display for PreferenceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "[{a}, {b}, {c}, {d}]")
    }
}

/// Dot product `w · r`.
pub fn scalarize(r: &RewardVector, w: &PreferenceVector) -> f64 {
    r.0.iter().zip(&w.0).map(|(r, w)| r * w).sum()
}

/// Slice form of [`scalarize`] for vectors of unchecked length.
pub fn scalarize_slices(r: &[f64], w: &[f64]) -> Result<f64> {
    if r.len() != w.len() {
        return Err(Error::usage(format!(
            "reward has {} components but preference has {}",
            r.len(),
            w.len()
        )));
    }
    Ok(r.iter().zip(w).map(|(r, w)| r * w).sum())
}

/// How preference weights are rescaled before entering the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScaling {
    #[default]
    Identity,
    DivideByMax,
}

/// Network-side view of a preference vector.
pub fn network_input(w: &PreferenceVector, scaling: WeightScaling) -> Result<[f64; 4]> {
    let w = PreferenceVector::new(w.0)?;
    Ok(match scaling {
        WeightScaling::Identity => w.0,
        WeightScaling::DivideByMax => {
            let max = w.0.iter().copied().fold(0.0, f64::max);
            if max == 0.0 {
                w.0
            } else {
                w.0.map(|v| v / max)
            }
        }
    })
}

/// Finite set of preference vectors sampled uniformly during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSpace {
    candidates: Vec<PreferenceVector>,
}

impl PreferenceSpace {
    /// `points` lone-capture weights evenly spaced on `[0, 0.97]`, team weight complementing.
    pub fn evenly_spaced(points: usize) -> Result<Self> {
        Ok(PreferenceSpace {
            candidates: lone_grid(points)?
                .into_iter()
                .map(PreferenceVector::from_lone)
                .collect::<Result<_>>()?,
        })
    }

    /// The five-point training space.
    pub fn training() -> Self {
        Self::evenly_spaced(5).expect("five points is a valid grid")
    }

    pub fn fixed(w: PreferenceVector) -> Self {
        PreferenceSpace { candidates: vec![w] }
    }

    pub fn from_candidates(candidates: Vec<PreferenceVector>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::config("preference space needs at least one vector"));
        }
        for w in &candidates {
            PreferenceVector::new(w.0)?;
        }
        Ok(PreferenceSpace { candidates })
    }

    pub fn candidates(&self) -> &[PreferenceVector] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PreferenceVector {
        self.candidates[rng.random_range(0..self.candidates.len())]
    }
}

impl Default for PreferenceSpace {
    fn default() -> Self {
        Self::training()
    }
}

/// `points` evenly spaced values on `[0, 0.97]` (both ends included).
pub fn lone_grid(points: usize) -> Result<Vec<f64>> {
    match points {
        0 => Err(Error::config("weight grid needs at least one point")),
        1 => Ok(vec![0.0]),
        n => Ok((0..n)
            .map(|i| CAPTURE_MASS * i as f64 / (n - 1) as f64)
            .collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    const COOP: [f64; 4] = [0.005, 0.025, 0.0, 0.97];

    #[test]
    fn scalarize_examples() {
        let w = PreferenceVector(COOP);
        let a = scalarize(&RewardVector([-1.0, -1.0, 0.0, 0.0]), &w);
        assert!((a - -0.03).abs() < 1e-15);
        let b = scalarize(&RewardVector([-1.0, 0.0, 0.0, 1.0]), &w);
        assert!((b - 0.965).abs() < 1e-15);
        let z = scalarize(&RewardVector([-1.0, -1.0, 1.0, 0.0]), &PreferenceVector([0.0; 4]));
        assert_eq!(z, 0.0);
    }

    #[test]
    fn slice_length_mismatch() {
        assert!(matches!(
            scalarize_slices(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::Usage(_))
        ));
        assert_eq!(scalarize_slices(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
    }

    #[test]
    fn training_space() {
        let space = PreferenceSpace::training();
        let lones: Vec<f64> = space.candidates().iter().map(|w| w.lone()).collect();
        let expected = [0.0, 0.2425, 0.485, 0.7275, 0.97];
        for (a, b) in lones.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        for w in space.candidates() {
            assert!((w.sum() - 1.0).abs() < 1e-9);
        }
        assert_eq!(space.candidates()[0], PreferenceVector::COOPERATIVE);
        assert_eq!(space.candidates()[4], PreferenceVector::COMPETITIVE);
        assert!((space.candidates()[2].team() - 0.485).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_uniform() {
        let space = PreferenceSpace::training();
        let mut rng = rng::stream(11, "prefs-test");
        let mut counts = [0usize; 5];
        let n = 50_000;
        for _ in 0..n {
            let w = space.sample(&mut rng);
            let i = space.candidates().iter().position(|c| *c == w).unwrap();
            counts[i] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.2).abs() < 0.01, "frequency {f}");
        }
    }

    #[test]
    fn network_input_checks_bounds() {
        let w = PreferenceVector([0.005, 0.025, 0.485, 0.485]);
        assert_eq!(network_input(&w, WeightScaling::Identity).unwrap(), w.0);
        let w = PreferenceVector([0.0, 0.0, 0.0, 1.0]);
        assert_eq!(network_input(&w, WeightScaling::Identity).unwrap(), w.0);
        let bad = PreferenceVector([0.005, 0.025, 1.2, 0.0]);
        assert!(network_input(&bad, WeightScaling::Identity).is_err());
        let w = PreferenceVector([0.005, 0.025, 0.0, 0.5]);
        assert_eq!(
            network_input(&w, WeightScaling::DivideByMax).unwrap(),
            [0.01, 0.05, 0.0, 1.0]
        );
    }

    #[test]
    fn grids() {
        assert_eq!(lone_grid(1).unwrap(), vec![0.0]);
        assert!(lone_grid(0).is_err());
        let nine = lone_grid(9).unwrap();
        assert!((nine[3] - 0.36375).abs() < 1e-12);
        assert!(PreferenceVector::from_lone(0.98).is_err());
    }

    proptest! {
        #[test]
        fn scalarize_is_linear(
            r1 in prop::array::uniform4(-2.0f64..2.0),
            r2 in prop::array::uniform4(-2.0f64..2.0),
            w in prop::array::uniform4(0.0f64..1.0),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let w = PreferenceVector(w);
            let mut combo = [0.0; 4];
            for i in 0..4 {
                combo[i] = a * r1[i] + b * r2[i];
            }
            let lhs = scalarize(&RewardVector(combo), &w);
            let rhs = a * scalarize(&RewardVector(r1), &w) + b * scalarize(&RewardVector(r2), &w);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn samples_stay_in_the_space(seed in any::<u64>()) {
            let space = PreferenceSpace::training();
            let mut rng = rng::from_seed(seed);
            for _ in 0..20 {
                let w = space.sample(&mut rng);
                prop_assert!(space.candidates().contains(&w));
                prop_assert!((w.sum() - 1.0).abs() < 1e-9);
            }
        }
    }
}
