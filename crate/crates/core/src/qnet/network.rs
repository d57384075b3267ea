//! Forward and backward passes.
//!
//! Activations are kept channel-last (`batch × height × width × channels`),
//! so convolutions become one GEMM over an im2col matrix whose rows are the
//! receptive fields `(ky, kx, c)` of every output pixel.

use rand::Rng;

use super::config::{ConvLayer, MapShape, NetConfig};
use super::params::{Gradients, QNetworkParams};
use super::scalar::Real;
use crate::error::{Error, Result};
use crate::prefs::{self, PreferenceVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active.
    Train,
    /// Deterministic; dropout disabled.
    Eval,
}

/// Intermediate values of a forward pass needed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    conv_cols: Vec<Vec<T>>,
    conv_pre: Vec<Vec<T>>,
    /// Per-activation dropout scale (0 or `1 / keep`), absent in eval mode.
    conv_mask: Vec<Option<Vec<T>>>,
    dense_in: Vec<Vec<T>>,
    dense_pre: Vec<Vec<T>>,
    q: Vec<T>,
}

impl<T: Real> ForwardCache<T> {
    /// `batch × outputs` Q-values.
    pub fn q_values(&self) -> &[T] {
        &self.q
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Dropout scale factors of conv layer `layer`, if dropout was applied.
    pub fn dropout_mask(&self, layer: usize) -> Option<&[T]> {
        self.conv_mask[layer].as_deref()
    }

    /// Post-ReLU, post-dropout activations of conv layer `layer`.
    pub fn conv_activation(&self, layer: usize) -> Vec<T> {
        let pre = &self.conv_pre[layer];
        let mut out: Vec<T> = pre.iter().map(|&z| z.max(T::zero())).collect();
        if let Some(mask) = &self.conv_mask[layer] {
            for (o, &m) in out.iter_mut().zip(mask) {
                *o = *o * m;
            }
        }
        out
    }

    /// Post-ReLU activations of hidden dense layer `layer`.
    pub fn dense_activation(&self, layer: usize) -> Vec<T> {
        self.dense_pre[layer].iter().map(|&z| z.max(T::zero())).collect()
    }
}

/// Preference vector as network input, after the configured rescaling.
pub fn encode_prefs<T: Real>(config: &NetConfig, w: &PreferenceVector) -> Result<[T; 4]> {
    Ok(prefs::network_input(w, config.weight_scaling)?.map(T::from_f64))
}

fn im2col<T: Real>(
    input: &[T],
    batch: usize,
    in_shape: MapShape,
    layer: &ConvLayer,
    out_shape: MapShape,
) -> Vec<T> {
    let (k, s, pad, c) = (layer.kernel, layer.stride, layer.pad() as isize, in_shape.channels);
    let row_len = k * k * c;
    let mut cols = vec![T::zero(); batch * out_shape.height * out_shape.width * row_len];
    let mut rows = cols.chunks_exact_mut(row_len);
    for b in 0..batch {
        let img = &input[b * in_shape.len()..(b + 1) * in_shape.len()];
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                let row = rows.next().expect("row count matches output size");
                for ky in 0..k {
                    let iy = (oy * s + ky) as isize - pad;
                    if iy < 0 || iy >= in_shape.height as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * s + kx) as isize - pad;
                        if ix < 0 || ix >= in_shape.width as isize {
                            continue;
                        }
                        let src = (iy as usize * in_shape.width + ix as usize) * c;
                        let dst = (ky * k + kx) * c;
                        row[dst..dst + c].copy_from_slice(&img[src..src + c]);
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(
    cols: &[T],
    batch: usize,
    in_shape: MapShape,
    layer: &ConvLayer,
    out_shape: MapShape,
) -> Vec<T> {
    let (k, s, pad, c) = (layer.kernel, layer.stride, layer.pad() as isize, in_shape.channels);
    let row_len = k * k * c;
    let mut out = vec![T::zero(); batch * in_shape.len()];
    let mut rows = cols.chunks_exact(row_len);
    for b in 0..batch {
        let img = &mut out[b * in_shape.len()..(b + 1) * in_shape.len()];
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                let row = rows.next().expect("row count matches output size");
                for ky in 0..k {
                    let iy = (oy * s + ky) as isize - pad;
                    if iy < 0 || iy >= in_shape.height as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * s + kx) as isize - pad;
                        if ix < 0 || ix >= in_shape.width as isize {
                            continue;
                        }
                        let dst = (iy as usize * in_shape.width + ix as usize) * c;
                        let src = (ky * k + kx) * c;
                        for (d, &v) in img[dst..dst + c].iter_mut().zip(&row[src..src + c]) {
                            *d = *d + v;
                        }
                    }
                }
            }
        }
    }
    out
}

fn add_bias<T: Real>(z: &mut [T], bias: &[T]) {
    for row in z.chunks_exact_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v = *v + b;
        }
    }
}

fn check_inputs<T: Real>(config: &NetConfig, obs: &[T], prefs: &[T]) -> Result<usize> {
    let batch = prefs.len() / config.weight_inputs;
    if prefs.len() != batch * config.weight_inputs || batch == 0 {
        return Err(Error::config(format!(
            "preference input of length {} is not a positive multiple of {}",
            prefs.len(),
            config.weight_inputs
        )));
    }
    if obs.len() != batch * config.input_len() {
        return Err(Error::config(format!(
            "observation input of length {} does not match batch {batch} of {}x{}x{}",
            obs.len(),
            config.input_height,
            config.input_width,
            config.input_channels
        )));
    }
    Ok(batch)
}

/// Runs the network on a batch, keeping what [`backward`] needs.
///
/// `obs` holds `batch` rescaled observations back to back, `prefs` the
/// matching encoded preference vectors.
pub fn forward_cached<T: Real, R: Rng + ?Sized>(
    params: &QNetworkParams<T>,
    obs: &[T],
    prefs: &[T],
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardCache<T>> {
    let config = params.config();
    let batch = check_inputs(config, obs, prefs)?;
    let conv_shapes = config.conv_shapes()?;
    let keep = 1.0 - config.dropout;
    let apply_dropout = mode == Mode::Train && config.dropout > 0.0;
    let scale = T::from_f64(1.0 / keep);

    let mut cache = ForwardCache {
        batch,
        conv_cols: Vec::with_capacity(config.conv.len()),
        conv_pre: Vec::with_capacity(config.conv.len()),
        conv_mask: Vec::with_capacity(config.conv.len()),
        dense_in: Vec::with_capacity(config.dense.len() + 1),
        dense_pre: Vec::with_capacity(config.dense.len()),
        q: Vec::new(),
    };

    let mut act = obs.to_vec();
    let mut in_shape = config.input_shape();
    for (l, (layer, &out_shape)) in config.conv.iter().zip(&conv_shapes).enumerate() {
        let cols = im2col(&act, batch, in_shape, layer, out_shape);
        let rows = batch * out_shape.height * out_shape.width;
        let row_len = layer.kernel * layer.kernel * in_shape.channels;
        let mut z = vec![T::zero(); rows * layer.filters];
        T::gemm(
            false,
            false,
            rows,
            layer.filters,
            row_len,
            T::one(),
            &cols,
            params.conv_kernel(l),
            T::zero(),
            &mut z,
        );
        add_bias(&mut z, params.conv_bias(l));
        act = z.iter().map(|&v| v.max(T::zero())).collect();
        let mask = apply_dropout.then(|| {
            let mask: Vec<T> = (0..act.len())
                .map(|_| {
                    if rng.random::<f64>() < keep {
                        scale
                    } else {
                        T::zero()
                    }
                })
                .collect();
            for (a, &m) in act.iter_mut().zip(&mask) {
                *a = *a * m;
            }
            mask
        });
        cache.conv_cols.push(cols);
        cache.conv_pre.push(z);
        cache.conv_mask.push(mask);
        in_shape = out_shape;
    }

    let flat = in_shape.len();
    let w_len = config.weight_inputs;
    let mut x = Vec::with_capacity(batch * (flat + w_len));
    for b in 0..batch {
        x.extend_from_slice(&act[b * flat..(b + 1) * flat]);
        x.extend_from_slice(&prefs[b * w_len..(b + 1) * w_len]);
    }

    let mut fan_in = flat + w_len;
    let n_dense = config.dense.len();
    for (j, &units) in config.dense.iter().chain(std::iter::once(&config.outputs)).enumerate() {
        let mut z = vec![T::zero(); batch * units];
        T::gemm(
            false,
            false,
            batch,
            units,
            fan_in,
            T::one(),
            &x,
            params.dense_weight(j),
            T::zero(),
            &mut z,
        );
        add_bias(&mut z, params.dense_bias(j));
        cache.dense_in.push(std::mem::take(&mut x));
        if j < n_dense {
            x = z.iter().map(|&v| v.max(T::zero())).collect();
            cache.dense_pre.push(z);
        } else {
            cache.q = z;
        }
        fan_in = units;
    }
    Ok(cache)
}

/// Q-values for a batch (`batch × outputs`).
pub fn forward<T: Real, R: Rng + ?Sized>(
    params: &QNetworkParams<T>,
    obs: &[T],
    prefs: &[T],
    mode: Mode,
    rng: &mut R,
) -> Result<Vec<T>> {
    Ok(forward_cached(params, obs, prefs, mode, rng)?.q)
}

/// Deterministic evaluation-mode Q-values.
pub fn q_values<T: Real>(params: &QNetworkParams<T>, obs: &[T], prefs: &[T]) -> Result<Vec<T>> {
    // eval mode never draws from the rng
    forward(params, obs, prefs, Mode::Eval, &mut crate::rng::from_seed(0))
}

/// Backpropagates `dq` (gradient of the loss w.r.t. every Q-value) through
/// the pass recorded in `cache`.
pub fn backward<T: Real>(
    params: &QNetworkParams<T>,
    cache: &ForwardCache<T>,
    dq: &[T],
) -> Gradients<T> {
    let config = params.config();
    let batch = cache.batch;
    assert_eq!(dq.len(), batch * config.outputs, "dq must be batch x outputs");
    let n_conv = config.conv.len();
    let n_dense = config.dense.len();
    let conv_shapes = config.conv_shapes().expect("validated by forward");
    let mut grads = params.zeros_like();

    let mut dz = dq.to_vec();
    let mut units = config.outputs;
    let mut dx = Vec::new();
    for j in (0..=n_dense).rev() {
        let x = &cache.dense_in[j];
        let fan_in = x.len() / batch;
        let gi = 2 * (n_conv + j);
        T::gemm(true, false, fan_in, units, batch, T::one(), x, &dz, T::zero(), &mut grads[gi]);
        for row in dz.chunks_exact(units) {
            for (g, &d) in grads[gi + 1].iter_mut().zip(row) {
                *g = *g + d;
            }
        }
        dx = vec![T::zero(); batch * fan_in];
        T::gemm(
            false,
            true,
            batch,
            fan_in,
            units,
            T::one(),
            &dz,
            params.dense_weight(j),
            T::zero(),
            &mut dx,
        );
        if j > 0 {
            let pre = &cache.dense_pre[j - 1];
            for (d, &z) in dx.iter_mut().zip(pre) {
                if z <= T::zero() {
                    *d = T::zero();
                }
            }
            dz = std::mem::take(&mut dx);
            units = fan_in;
        }
    }

    if n_conv == 0 {
        return grads;
    }
    let last = conv_shapes[n_conv - 1];
    let flat = last.len();
    let stride = flat + config.weight_inputs;
    let mut d_act: Vec<T> = dx
        .chunks_exact(stride)
        .flat_map(|row| row[..flat].iter().copied())
        .collect();

    for l in (0..n_conv).rev() {
        let layer = &config.conv[l];
        let out_shape = conv_shapes[l];
        let in_shape = if l == 0 { config.input_shape() } else { conv_shapes[l - 1] };
        if let Some(mask) = &cache.conv_mask[l] {
            for (d, &m) in d_act.iter_mut().zip(mask) {
                *d = *d * m;
            }
        }
        for (d, &z) in d_act.iter_mut().zip(&cache.conv_pre[l]) {
            if z <= T::zero() {
                *d = T::zero();
            }
        }
        let rows = batch * out_shape.height * out_shape.width;
        let row_len = layer.kernel * layer.kernel * in_shape.channels;
        T::gemm(
            true,
            false,
            row_len,
            layer.filters,
            rows,
            T::one(),
            &cache.conv_cols[l],
            &d_act,
            T::zero(),
            &mut grads[2 * l],
        );
        for row in d_act.chunks_exact(layer.filters) {
            for (g, &d) in grads[2 * l + 1].iter_mut().zip(row) {
                *g = *g + d;
            }
        }
        if l > 0 {
            let mut dcols = vec![T::zero(); rows * row_len];
            T::gemm(
                false,
                true,
                rows,
                row_len,
                layer.filters,
                T::one(),
                &d_act,
                params.conv_kernel(l),
                T::zero(),
                &mut dcols,
            );
            d_act = col2im(&dcols, batch, in_shape, layer, out_shape);
        }
    }
    grads
}

/// Huber loss with unit threshold.
pub fn huber_loss<T: Real>(pred: T, target: T) -> T {
    let d = pred - target;
    let half = T::from_f64(0.5);
    if d.abs() <= T::one() {
        half * d * d
    } else {
        d.abs() - half
    }
}

/// Derivative of [`huber_loss`] w.r.t. `pred`.
pub fn huber_grad<T: Real>(pred: T, target: T) -> T {
    let d = pred - target;
    d.max(-T::one()).min(T::one())
}

/// Mean Huber loss over a batch.
pub fn mean_huber<T: Real>(pred: &[T], target: &[T]) -> T {
    assert_eq!(pred.len(), target.len());
    if pred.is_empty() {
        return T::zero();
    }
    let sum = pred
        .iter()
        .zip(target)
        .fold(T::zero(), |acc, (&p, &t)| acc + huber_loss(p, t));
    sum / T::from_f64(pred.len() as f64)
}

/// Minibatch of training inputs with one regression target per sample.
#[derive(Debug, Clone)]
pub struct TrainBatch<T> {
    pub obs: Vec<T>,
    pub prefs: Vec<T>,
    pub actions: Vec<usize>,
    pub targets: Vec<T>,
}

/// Mean Huber loss on the Q-value of each sample's stored action, and its
/// gradient w.r.t. every parameter.
pub fn loss_and_gradients<T: Real, R: Rng + ?Sized>(
    params: &QNetworkParams<T>,
    batch: &TrainBatch<T>,
    mode: Mode,
    rng: &mut R,
) -> Result<(T, Gradients<T>)> {
    let cache = forward_cached(params, &batch.obs, &batch.prefs, mode, rng)?;
    let n = cache.batch;
    let outputs = params.config().outputs;
    if batch.actions.len() != n || batch.targets.len() != n {
        return Err(Error::config("actions and targets must have one entry per sample"));
    }
    let chosen: Vec<T> = batch
        .actions
        .iter()
        .enumerate()
        .map(|(b, &a)| cache.q[b * outputs + a])
        .collect();
    let loss = mean_huber(&chosen, &batch.targets);
    let inv_n = T::from_f64(1.0 / n as f64);
    let mut dq = vec![T::zero(); n * outputs];
    for (b, (&a, (&q, &y))) in batch
        .actions
        .iter()
        .zip(chosen.iter().zip(&batch.targets))
        .enumerate()
    {
        if a >= outputs {
            return Err(Error::config(format!("action index {a} out of range")));
        }
        dq[b * outputs + a] = huber_grad(q, y) * inv_n;
    }
    Ok((loss, backward(params, &cache, &dq)))
}
