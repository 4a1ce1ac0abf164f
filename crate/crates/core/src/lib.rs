//! Federated training and attention-weighted inference over multi-site
//! functional-connectivity data.
//!
//! Every numeric type is generic over a [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix it to `f64`, which is what the binary formats
//! store and what the command-line harness uses.

mod codec;
pub mod dataset;
pub mod error;
pub mod federation;
pub mod models;
pub mod nn;
pub mod scalar;
pub mod seed;
pub mod tensor;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Network64 = nn::Network<f64>;
pub type Autoencoder64 = models::Autoencoder<f64>;
pub type Classifier64 = models::Classifier<f64>;
pub type GlobalBundle64 = federation::GlobalBundle<f64>;
pub type Client64 = federation::Client<f64>;
