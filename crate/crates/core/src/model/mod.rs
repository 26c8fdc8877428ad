//! The fully connected, 2D convolutional and (2+1)D convolutional regressors.

mod checkpoint;
mod network;
mod spec;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use network::{init_params, Gradients, Model};
pub use spec::{
    Arch, LayerSpec, LayerSummary, ModelSpec, Scale, TemporalMode, DEFAULT_STRIDE, DROPOUT_RATE,
    N_TARGETS,
};

use crate::error::Result;
use crate::scalar::Scalar;

pub fn build_fcn<T: Scalar>(scale: Scale, seed: u64) -> Result<Model<T>> {
    Model::build(ModelSpec::fcn(scale), seed)
}

pub fn build_cnn2d<T: Scalar>(scale: Scale, seed: u64) -> Result<Model<T>> {
    Model::build(ModelSpec::cnn2d(scale), seed)
}

pub fn build_cnn3d<T: Scalar>(
    scale: Scale,
    stride: usize,
    mode: TemporalMode,
    seed: u64,
) -> Result<Model<T>> {
    Model::build(ModelSpec::cnn3d(scale, stride, mode)?, seed)
}
