use rand::Rng;
use sha2::{Digest, Sha256};

use super::config::NetConfig;
use super::scalar::Real;
use crate::error::{Error, Result};
use crate::rng;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            name: name.into(),
            shape,
            data: vec![T::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// All learnable tensors of a Q-network, in [`NetConfig::param_shapes`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetworkParams<T> {
    config: NetConfig,
    tensors: Vec<Tensor<T>>,
}

/// Gradients share the parameter layout.
pub type Gradients<T> = Vec<Vec<T>>;

impl<T: Real> QNetworkParams<T> {
    /// Seeded initialization: He-uniform for ReLU layers, `±1/sqrt(fan_in)`
    /// for the linear output layer, zero biases.
    pub fn init(config: &NetConfig, seed: u64) -> Result<Self> {
        let shapes = config.param_shapes()?;
        let mut rng = rng::stream(seed, "qnet-init");
        let last_weight = shapes.len() - 2;
        let tensors = shapes
            .into_iter()
            .enumerate()
            .map(|(i, (name, shape))| {
                let mut t = Tensor::zeros(name, shape);
                if i % 2 == 0 {
                    let fan_in = t.shape[0] as f64;
                    let limit = if i == last_weight {
                        1.0 / fan_in.sqrt()
                    } else {
                        (6.0 / fan_in).sqrt()
                    };
                    for v in &mut t.data {
                        *v = T::from_f64(rng.random_range(-limit..limit));
                    }
                }
                t
            })
            .collect();
        Ok(QNetworkParams {
            config: config.clone(),
            tensors,
        })
    }

    /// Rebuilds parameters from flattened arrays, checking every shape.
    pub fn from_tensors(config: &NetConfig, data: Vec<Vec<T>>) -> Result<Self> {
        let shapes = config.param_shapes()?;
        if shapes.len() != data.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                shapes.len(),
                data.len()
            )));
        }
        let tensors = shapes
            .into_iter()
            .zip(data)
            .map(|((name, shape), data)| {
                let want: usize = shape.iter().product();
                if want != data.len() {
                    return Err(Error::Checkpoint(format!(
                        "{name}: expected {want} values for shape {shape:?}, found {}",
                        data.len()
                    )));
                }
                Ok(Tensor { name, shape, data })
            })
            .collect::<Result<_>>()?;
        Ok(QNetworkParams {
            config: config.clone(),
            tensors,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Gradients<T> {
        self.tensors.iter().map(|t| vec![T::zero(); t.len()]).collect()
    }

    pub fn conv_kernel(&self, layer: usize) -> &[T] {
        &self.tensors[2 * layer].data
    }

    pub fn conv_bias(&self, layer: usize) -> &[T] {
        &self.tensors[2 * layer + 1].data
    }

    /// Dense layer `layer`, where index `config.dense.len()` is the output layer.
    pub fn dense_weight(&self, layer: usize) -> &[T] {
        &self.tensors[2 * (self.config.conv.len() + layer)].data
    }

    pub fn dense_bias(&self, layer: usize) -> &[T] {
        &self.tensors[2 * (self.config.conv.len() + layer) + 1].data
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Converts every value to another precision.
    pub fn cast<U: Real>(&self) -> QNetworkParams<U> {
        QNetworkParams {
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// SHA-256 over the architecture and the exact bit patterns of every value.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.config).expect("config serializes"));
        for t in &self.tensors {
            for v in &t.data {
                h.update(v.as_f64().to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
