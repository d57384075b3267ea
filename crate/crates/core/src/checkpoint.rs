//! Versioned JSON checkpoints.
//!
//! Layout: `version`, the `net` architecture, `params` as a list of
//! `{name, shape, data}` records in storage order (conv kernels/biases, then
//! dense weights/biases, output layer last; every array row-major), the
//! optional Adam state, and `meta` describing the run. Values are `f32`
//! written in shortest round-trip form, so reloading is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, GridMap};
use crate::error::{Error, Result};
use crate::prefs::PreferenceVector;
use crate::qnet::{AdamConfig, NetConfig, OptState, QNetworkParams};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerRecord {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub run_id: String,
    pub agent: usize,
    pub episode: u64,
    pub epsilon: f64,
    pub env_steps: u64,
    pub seed: u64,
    pub preference_space: Vec<PreferenceVector>,
    /// ASCII rows of the training map.
    pub map: Vec<String>,
    pub env: EnvConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub net: NetConfig,
    pub params: Vec<TensorRecord>,
    pub optimizer: Option<OptimizerRecord>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn new(params: &QNetworkParams<f32>, opt: Option<&OptState<f32>>, meta: CheckpointMeta) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            net: params.config().clone(),
            params: params
                .tensors()
                .iter()
                .map(|t| TensorRecord {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.clone(),
                })
                .collect(),
            optimizer: opt.map(|o| OptimizerRecord {
                config: o.config,
                step: o.step,
                m: o.m.clone(),
                v: o.v.clone(),
            }),
            meta,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)
            .map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        ckpt.params()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::trainer::write_file(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Network parameters, validated against the stored architecture.
    pub fn params(&self) -> Result<QNetworkParams<f32>> {
        let shapes = self.net.param_shapes().map_err(|e| Error::Checkpoint(e.to_string()))?;
        for (record, (name, shape)) in self.params.iter().zip(&shapes) {
            if &record.name != name || &record.shape != shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match expected {name} {shape:?}",
                    record.name, record.shape
                )));
            }
        }
        QNetworkParams::from_tensors(&self.net, self.params.iter().map(|t| t.data.clone()).collect())
    }

    pub fn optimizer(&self, params: &QNetworkParams<f32>) -> Result<Option<OptState<f32>>> {
        let Some(rec) = &self.optimizer else {
            return Ok(None);
        };
        let opt = OptState {
            config: rec.config,
            step: rec.step,
            m: rec.m.clone(),
            v: rec.v.clone(),
        };
        if !opt.matches(params) {
            return Err(Error::Checkpoint("optimizer moments do not match parameters".into()));
        }
        Ok(Some(opt))
    }

    pub fn map(&self) -> Result<GridMap> {
        GridMap::from_rows(&self.meta.map).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    /// Errors unless the checkpoint's network takes input of the given map.
    pub fn check_compatible(&self, map: &GridMap) -> Result<()> {
        if (self.net.input_height, self.net.input_width) != (map.height(), map.width()) {
            return Err(Error::Checkpoint(format!(
                "checkpoint network expects a {}x{} map, got {}x{}",
                self.net.input_height,
                self.net.input_width,
                map.height(),
                map.width()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnet::q_values;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            run_id: "t".into(),
            agent: 0,
            episode: 12,
            epsilon: 0.5,
            env_steps: 99,
            seed: 4,
            preference_space: vec![PreferenceVector::COOPERATIVE],
            map: GridMap::desk().to_rows(),
            env: EnvConfig::default(),
        }
    }

    #[test]
    fn reload_is_bit_exact() {
        let net = NetConfig::desk();
        let p = QNetworkParams::<f32>::init(&net, 8).unwrap();
        let opt = OptState::new(&p, AdamConfig::default());
        let ck = Checkpoint::new(&p, Some(&opt), meta());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run/agent0_ep12.ckpt.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        let q = back.params().unwrap();
        assert_eq!(q, p);
        assert_eq!(back.optimizer(&q).unwrap().unwrap(), opt);
        assert_eq!(back.map().unwrap(), GridMap::desk());

        let mut r = rng::from_seed(1);
        let obs: Vec<f32> = (0..net.input_len()).map(|_| r.random()).collect();
        let w = [0.005f32, 0.025, 0.3, 0.67];
        let a = q_values(&p, &obs, &w).unwrap();
        let b = q_values(&q, &obs, &w).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn wrong_version_and_shapes_are_rejected() {
        let p = QNetworkParams::<f32>::init(&NetConfig::desk(), 8).unwrap();
        let mut ck = Checkpoint::new(&p, None, meta());
        ck.version = 99;
        assert!(matches!(Checkpoint::from_json(&ck.to_json().unwrap()), Err(Error::Checkpoint(_))));
        ck.version = CHECKPOINT_VERSION;
        ck.params[0].shape = vec![1, 2];
        assert!(matches!(Checkpoint::from_json(&ck.to_json().unwrap()), Err(Error::Checkpoint(_))));
        assert!(Checkpoint::from_json("{not json").is_err());
    }

    #[test]
    fn compatibility_with_map() {
        let p = QNetworkParams::<f32>::init(&NetConfig::desk(), 8).unwrap();
        let ck = Checkpoint::new(&p, None, meta());
        assert!(ck.check_compatible(&GridMap::desk()).is_ok());
        assert!(ck.check_compatible(&GridMap::canonical()).is_err());
    }

    proptest! {
        #[test]
        fn f32_values_survive_json(bits in any::<u32>()) {
            let v = f32::from_bits(bits);
            prop_assume!(v.is_finite());
            let text = serde_json::to_string(&vec![v]).unwrap();
            let back: Vec<f32> = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back[0].to_bits(), v.to_bits());
        }
    }
}
