//! Ultrasound-to-speech-parameter regression with fully connected, 2D
//! convolutional and (2+1)D spatiotemporal convolutional networks, trained from
//! first principles with plain mini-batch SGD.
//!
//! All numeric code is generic over [`Scalar`] (`f32` for training, `f64` for
//! gradient verification); the aliases below name the two concrete instantiations.

mod binio;
pub mod config;
pub mod data;
pub mod error;
pub mod harness;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Model32 = model::Model<f32>;
pub type Model64 = model::Model<f64>;
