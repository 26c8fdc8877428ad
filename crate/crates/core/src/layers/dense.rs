use super::activation::{swish_grad, Activation};
use super::Mode;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{matmul, Tensor};

pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone)]
struct DenseCache<T> {
    input: Tensor<T>,
    pre_activation: Option<Tensor<T>>,
}

/// Fully connected layer `y = act(x W + b)` on `[batch, features]` inputs.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
    cache: Option<DenseCache<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>, activation: Activation) -> Result<Self> {
        if weights.rank() != 2 || bias.rank() != 1 || bias.len() != weights.shape()[1] {
            return Err(Error::dim("Dense::new", weights.shape(), bias.shape()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
            cache: None,
        })
    }

    pub fn in_features(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if x.rank() != 2 || x.shape()[1] != self.in_features() {
            return Err(Error::dim("dense_forward", x.shape(), self.weights.shape()));
        }
        let mut z = matmul(x, &self.weights)?;
        let n = self.out_features();
        for row in z.data_mut().chunks_mut(n) {
            for (v, &b) in row.iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        let pre_activation = match (self.activation, mode) {
            (Activation::Swish, Mode::Train) => Some(z.clone()),
            _ => None,
        };
        self.activation.apply_in_place(z.data_mut());
        self.cache = match mode {
            Mode::Train => Some(DenseCache {
                input: x.clone(),
                pre_activation,
            }),
            Mode::Inference => None,
        };
        Ok(z)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<DenseGrads<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| {
            Error::Usage("dense backward called without a cached training forward".into())
        })?;
        let x = &cache.input;
        let (batch, n_in, n_out) = (x.shape()[0], self.in_features(), self.out_features());
        if grad_out.shape() != [batch, n_out] {
            return Err(Error::dim(
                "dense_backward",
                grad_out.shape(),
                &[batch, n_out],
            ));
        }
        let gz = match &cache.pre_activation {
            Some(z) => grad_out.zip(z, |g, z| g * swish_grad(z))?,
            None => grad_out.clone(),
        };

        let w = self.weights.data();
        let mut gw = vec![T::zero(); n_in * n_out];
        let mut gb = vec![T::zero(); n_out];
        let mut gx = vec![T::zero(); batch * n_in];
        for i in 0..batch {
            let grow = &gz.data()[i * n_out..(i + 1) * n_out];
            for (b, &g) in gb.iter_mut().zip(grow) {
                *b += g;
            }
            let xrow = &x.data()[i * n_in..(i + 1) * n_in];
            let gxrow = &mut gx[i * n_in..(i + 1) * n_in];
            for p in 0..n_in {
                let wrow = &w[p * n_out..(p + 1) * n_out];
                let mut dot = T::zero();
                for (&wv, &g) in wrow.iter().zip(grow) {
                    dot += wv * g;
                }
                gxrow[p] = dot;
                let xv = xrow[p];
                if xv != T::zero() {
                    for (acc, &g) in gw[p * n_out..(p + 1) * n_out].iter_mut().zip(grow) {
                        *acc += xv * g;
                    }
                }
            }
        }
        Ok(DenseGrads {
            input: Tensor::new(vec![batch, n_in], gx)?,
            weights: Tensor::new(vec![n_in, n_out], gw)?,
            bias: Tensor::new(vec![n_out], gb)?,
        })
    }
}
