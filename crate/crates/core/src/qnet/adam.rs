use serde::{Deserialize, Serialize};

use super::params::{Gradients, QNetworkParams};
use super::scalar::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> OptState<T> {
    pub fn new(params: &QNetworkParams<T>, config: AdamConfig) -> Self {
        OptState {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn matches(&self, params: &QNetworkParams<T>) -> bool {
        self.m.len() == params.tensors().len()
            && self.v.len() == params.tensors().len()
            && self
                .m
                .iter()
                .zip(&self.v)
                .zip(params.tensors())
                .all(|((m, v), t)| m.len() == t.len() && v.len() == t.len())
    }
}

/// One bias-corrected Adam update. Fails without touching anything if a
/// gradient is not finite.
pub fn adam_step<T: Real>(
    params: &mut QNetworkParams<T>,
    grads: &Gradients<T>,
    opt: &mut OptState<T>,
) -> Result<()> {
    if !opt.matches(params) || grads.len() != opt.m.len() {
        return Err(Error::config("optimizer state does not match parameter layout"));
    }
    for (g, t) in grads.iter().zip(params.tensors()) {
        if g.len() != t.len() {
            return Err(Error::config(format!("gradient for {} has the wrong size", t.name)));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite gradient {:?} at {}[{i}] (optimizer step {})",
                g[i],
                t.name,
                opt.step + 1
            )));
        }
    }
    opt.step += 1;
    let c = opt.config;
    let t = opt.step as i32;
    let b1 = T::from_f64(c.beta1);
    let b2 = T::from_f64(c.beta2);
    let one_b1 = T::from_f64(1.0 - c.beta1);
    let one_b2 = T::from_f64(1.0 - c.beta2);
    let correct1 = T::from_f64(1.0 / (1.0 - c.beta1.powi(t)));
    let correct2 = T::from_f64(1.0 / (1.0 - c.beta2.powi(t)));
    let lr = T::from_f64(c.learning_rate);
    let eps = T::from_f64(c.epsilon);
    for (((tensor, g), m), v) in params
        .tensors_mut()
        .iter_mut()
        .zip(grads)
        .zip(opt.m.iter_mut())
        .zip(opt.v.iter_mut())
    {
        for (((p, &g), m), v) in tensor.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m * correct1;
            let v_hat = *v * correct2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
