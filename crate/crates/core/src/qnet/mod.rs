//! Preference-conditioned convolutional Q-network with Adam training.

mod adam;
mod config;
mod network;
mod params;
mod scalar;

pub use self::adam::{adam_step, AdamConfig, OptState};
pub use self::config::{ConvLayer, MapShape, NetConfig, Padding};
pub use self::network::{
    backward, encode_prefs, forward, forward_cached, huber_grad, huber_loss, loss_and_gradients,
    mean_huber, q_values, ForwardCache, Mode, TrainBatch,
};
pub use self::params::{Gradients, QNetworkParams, Tensor};
pub use self::scalar::Real;

/// Deep copy used to refresh a target network.
pub fn copy_to_target<T: Real>(online: &QNetworkParams<T>) -> QNetworkParams<T> {
    online.clone()
}
