use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Swish,
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `x * sigmoid(x)`
#[inline]
pub fn swish<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

/// Derivative of [`swish`].
#[inline]
pub fn swish_grad<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    s + x * s * (T::one() - s)
}

pub fn swish_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(swish)
}

pub fn swish_backward<T: Scalar>(grad_out: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != x.shape() {
        return Err(Error::dim("swish_backward", grad_out.shape(), x.shape()));
    }
    grad_out.zip(x, |g, v| g * swish_grad(v))
}

impl Activation {
    pub(crate) fn apply_in_place<T: Scalar>(self, data: &mut [T]) {
        if self == Activation::Swish {
            for v in data {
                *v = swish(*v);
            }
        }
    }
}
