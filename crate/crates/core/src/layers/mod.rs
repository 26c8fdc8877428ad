//! Forward and backward passes for the layer types used by the model zoo.
//!
//! Every layer caches what its backward pass needs during a [`Mode::Train`]
//! forward call. Calling `backward` without that cache is a usage error.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod pool;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use activation::{swish, swish_backward, swish_forward, swish_grad, Activation};
pub use conv::{
    conv3d_backward, conv3d_forward, output_extent, same_padding, Conv3d, ConvConfig, ConvGrads,
    Padding,
};
pub use dense::{Dense, DenseGrads};
pub use dropout::Dropout;
pub use pool::MaxPool3d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Inference,
}

/// Collapses `[B, ...]` to `[B, features]`.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let b = x.shape()[0];
        let features = x.len() / b;
        if mode == Mode::Train {
            self.input_shape = Some(x.shape().to_vec());
        }
        x.reshape(&[b, features])
    }

    pub fn backward<T: Scalar>(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .input_shape
            .as_ref()
            .ok_or_else(|| Error::Usage("flatten backward called before forward".into()))?;
        grad_out.reshape(shape)
    }
}

/// One instantiated network layer.
#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv(Conv3d<T>),
    Dense(Dense<T>),
    Dropout(Dropout<T>),
    MaxPool(MaxPool3d),
    Flatten(Flatten),
}

impl<T: Scalar> Layer<T> {
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => l.forward(x, mode),
            Layer::Dense(l) => l.forward(x, mode),
            Layer::Dropout(l) => l.forward(x, mode),
            Layer::MaxPool(l) => l.forward(x, mode),
            Layer::Flatten(l) => l.forward(x, mode),
        }
    }

    /// Returns the input gradient (when `need_input` is set) and the
    /// parameter gradients in [`Layer::parameters`] order.
    pub fn backward(
        &mut self,
        grad_out: &Tensor<T>,
        need_input: bool,
    ) -> Result<(Option<Tensor<T>>, Vec<Tensor<T>>)> {
        match self {
            Layer::Conv(l) => {
                let g = l.backward(grad_out, need_input)?;
                Ok((g.input, vec![g.weights, g.bias]))
            }
            Layer::Dense(l) => {
                let g = l.backward(grad_out)?;
                Ok((Some(g.input), vec![g.weights, g.bias]))
            }
            Layer::Dropout(l) => Ok((Some(l.backward(grad_out)?), Vec::new())),
            Layer::MaxPool(l) => Ok((Some(l.backward(grad_out)?), Vec::new())),
            Layer::Flatten(l) => Ok((Some(l.backward(grad_out)?), Vec::new())),
        }
    }

    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv(l) => vec![&l.weights, &l.bias],
            Layer::Dense(l) => vec![&l.weights, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weights, &mut l.bias],
            _ => Vec::new(),
        }
    }
}
