use serde::{Deserialize, Serialize};

use crate::env::NUM_ACTIONS;
use crate::error::{Error, Result};
use crate::prefs::WeightScaling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Valid,
    /// Zero padding of `(kernel - 1) / 2` on every side.
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub filters: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: Padding,
}

fn one() -> usize {
    1
}

impl ConvLayer {
    pub fn new(filters: usize) -> Self {
        ConvLayer {
            filters,
            kernel: 3,
            stride: 1,
            padding: Padding::Valid,
        }
    }

    pub fn pad(&self) -> usize {
        match self.padding {
            Padding::Valid => 0,
            Padding::Same => (self.kernel - 1) / 2,
        }
    }
}

/// Height, width and channel count of an activation map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl MapShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Architecture of the preference-conditioned Q-network.
///
/// Stacked frames pass through the convolution layers (ReLU, dropout in
/// training), are flattened, concatenated with the preference vector and fed
/// through ReLU dense layers to a linear output with one value per action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    pub conv: Vec<ConvLayer>,
    /// Drop probability applied after every convolution layer in training mode.
    pub dropout: f64,
    pub dense: Vec<usize>,
    pub outputs: usize,
    pub weight_inputs: usize,
    #[serde(default)]
    pub weight_scaling: WeightScaling,
}

impl NetConfig {
    /// 16×16 input, 256-filter convolutions, 128/64 dense units.
    pub fn paper() -> Self {
        Self::with_sizes(16, 16, 256, &[128, 64])
    }

    /// 8×8 input, 32-filter convolutions, 64/32 dense units. Dropout is off:
    /// at this scale it kept the agents from learning within a few thousand
    /// episodes.
    pub fn desk() -> Self {
        NetConfig {
            dropout: 0.0,
            ..Self::with_sizes(8, 8, 32, &[64, 32])
        }
    }

    pub fn with_sizes(height: usize, width: usize, filters: usize, dense: &[usize]) -> Self {
        NetConfig {
            input_height: height,
            input_width: width,
            input_channels: 9,
            conv: vec![ConvLayer::new(filters), ConvLayer::new(filters)],
            dropout: 0.2,
            dense: dense.to_vec(),
            outputs: NUM_ACTIONS,
            weight_inputs: 4,
            weight_scaling: WeightScaling::Identity,
        }
    }

    pub fn input_shape(&self) -> MapShape {
        MapShape {
            height: self.input_height,
            width: self.input_width,
            channels: self.input_channels,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape().len()
    }

    /// Output shape of every convolution layer, in order.
    pub fn conv_shapes(&self) -> Result<Vec<MapShape>> {
        let mut shape = self.input_shape();
        let mut out = Vec::with_capacity(self.conv.len());
        for (i, layer) in self.conv.iter().enumerate() {
            if layer.filters == 0 || layer.kernel == 0 || layer.stride == 0 {
                return Err(Error::config(format!("conv layer {i} has a zero dimension")));
            }
            let pad = layer.pad();
            let (h, w) = (shape.height + 2 * pad, shape.width + 2 * pad);
            if h < layer.kernel || w < layer.kernel {
                return Err(Error::config(format!(
                    "conv layer {i}: kernel {} does not fit a {}x{} input",
                    layer.kernel, shape.height, shape.width
                )));
            }
            shape = MapShape {
                height: (h - layer.kernel) / layer.stride + 1,
                width: (w - layer.kernel) / layer.stride + 1,
                channels: layer.filters,
            };
            out.push(shape);
        }
        Ok(out)
    }

    /// Length of the flattened convolution output (before the preference concat).
    pub fn flatten_len(&self) -> Result<usize> {
        Ok(self
            .conv_shapes()?
            .last()
            .copied()
            .unwrap_or_else(|| self.input_shape())
            .len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_height == 0 || self.input_width == 0 || self.input_channels == 0 {
            return Err(Error::config("network input must be non-empty"));
        }
        if self.outputs != NUM_ACTIONS {
            return Err(Error::config(format!(
                "network must have {NUM_ACTIONS} outputs, got {}",
                self.outputs
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.dense.contains(&0) {
            return Err(Error::config("dense layers must have at least one unit"));
        }
        self.conv_shapes()?;
        Ok(())
    }

    /// Shapes of all parameter tensors in storage order: every conv layer's
    /// kernel `[k*k*c_in, filters]` and bias `[filters]`, then every dense
    /// layer's weight `[in, out]` and bias `[out]`, the output layer last.
    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        self.validate()?;
        let mut shapes = Vec::new();
        let mut channels = self.input_channels;
        for (i, layer) in self.conv.iter().enumerate() {
            shapes.push((
                format!("conv{i}.kernel"),
                vec![layer.kernel * layer.kernel * channels, layer.filters],
            ));
            shapes.push((format!("conv{i}.bias"), vec![layer.filters]));
            channels = layer.filters;
        }
        let mut fan_in = self.flatten_len()? + self.weight_inputs;
        for (i, &units) in self.dense.iter().chain(std::iter::once(&self.outputs)).enumerate() {
            let name = if i == self.dense.len() {
                "output".to_string()
            } else {
                format!("dense{i}")
            };
            shapes.push((format!("{name}.weight"), vec![fan_in, units]));
            shapes.push((format!("{name}.bias"), vec![units]));
            fan_in = units;
        }
        Ok(shapes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_profile_sizes() {
        let cfg = NetConfig::paper();
        let shapes = cfg.conv_shapes().unwrap();
        assert_eq!((shapes[0].height, shapes[0].width, shapes[0].channels), (14, 14, 256));
        assert_eq!((shapes[1].height, shapes[1].width, shapes[1].channels), (12, 12, 256));
        assert_eq!(cfg.flatten_len().unwrap(), 36_864);
        let params = cfg.param_shapes().unwrap();
        assert_eq!(params[4], ("dense0.weight".into(), vec![36_868, 128]));
        assert_eq!(params.last().unwrap().1, vec![5]);
    }

    #[test]
    fn desk_profile_sizes() {
        let cfg = NetConfig::desk();
        assert_eq!(cfg.flatten_len().unwrap(), 4 * 4 * 32);
    }

    #[test]
    fn same_padding_and_stride() {
        let mut cfg = NetConfig::with_sizes(8, 8, 4, &[4]);
        cfg.conv[0].padding = Padding::Same;
        cfg.conv[1].stride = 2;
        let s = cfg.conv_shapes().unwrap();
        assert_eq!((s[0].height, s[0].width), (8, 8));
        assert_eq!((s[1].height, s[1].width), (3, 3));
    }

    #[test]
    fn oversized_kernel_is_a_config_error() {
        let cfg = NetConfig::with_sizes(3, 3, 4, &[4]);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut bad = NetConfig::desk();
        bad.outputs = 4;
        assert!(bad.validate().is_err());
    }
}
