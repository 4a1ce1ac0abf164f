//! Layers, losses and the optimizer.

mod layers;
mod loss;
mod network;
mod optim;
mod params;

#[cfg(test)]
pub(crate) mod gradcheck;

pub use layers::{
    activation_forward, dropout_forward, instance_norm_forward, softmax, Activation, Layer,
    LayerParams, LayerSpec, DEFAULT_LEAKY_SLOPE, INSTANCE_NORM_EPS,
};
pub use loss::{cosine_reconstruction_loss, cross_entropy_loss};
pub use network::{Network, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use optim::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use params::ParamSet;
