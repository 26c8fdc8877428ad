use super::Mode;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Non-overlapping max pooling over `(time, height, width)`; stride equals the
/// pool size and trailing remainders are dropped.
#[derive(Debug, Clone)]
pub struct MaxPool3d {
    pub pool: [usize; 3],
    argmax: Option<Vec<usize>>,
    input_shape: Vec<usize>,
}

impl MaxPool3d {
    pub fn new(pool: [usize; 3]) -> Result<Self> {
        if pool.contains(&0) {
            return Err(Error::Usage(format!(
                "pool extents must be >= 1, got {pool:?}"
            )));
        }
        Ok(Self {
            pool,
            argmax: None,
            input_shape: Vec::new(),
        })
    }

    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let out = [
            input[0] / self.pool[0],
            input[1] / self.pool[1],
            input[2] / self.pool[2],
        ];
        if out.contains(&0) {
            return Err(Error::dim("maxpool", &input, &self.pool));
        }
        Ok(out)
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if x.rank() != 5 {
            return Err(Error::dim("maxpool", x.shape(), &self.pool));
        }
        let s = x.shape();
        let (b, c) = (s[0], s[4]);
        let [to, ho, wo] = self.output_dims([s[1], s[2], s[3]])?;
        let [pt, ph, pw] = self.pool;
        let strides = x.strides();
        let mut out = Vec::with_capacity(b * to * ho * wo * c);
        let mut argmax = Vec::with_capacity(out.capacity());
        let data = x.data();
        for n in 0..b {
            for t in 0..to {
                for h in 0..ho {
                    for w in 0..wo {
                        for ch in 0..c {
                            let mut best = usize::MAX;
                            let mut best_v = T::neg_infinity();
                            // Scan in increasing flat index; strict `>` keeps the lowest index on ties.
                            for dt in 0..pt {
                                for dh in 0..ph {
                                    for dw in 0..pw {
                                        let idx = n * strides[0]
                                            + (t * pt + dt) * strides[1]
                                            + (h * ph + dh) * strides[2]
                                            + (w * pw + dw) * strides[3]
                                            + ch;
                                        if best == usize::MAX || data[idx] > best_v {
                                            best = idx;
                                            best_v = data[idx];
                                        }
                                    }
                                }
                            }
                            out.push(best_v);
                            argmax.push(best);
                        }
                    }
                }
            }
        }
        if mode == Mode::Train {
            self.argmax = Some(argmax);
            self.input_shape = s.to_vec();
        } else {
            self.argmax = None;
        }
        Tensor::new(vec![b, to, ho, wo, c], out)
    }

    pub fn backward<T: Scalar>(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let argmax = self.argmax.as_ref().ok_or_else(|| {
            Error::Usage("maxpool backward called without a cached training forward".into())
        })?;
        if grad_out.len() != argmax.len() {
            return Err(Error::dim(
                "maxpool_backward",
                grad_out.shape(),
                &[argmax.len()],
            ));
        }
        let mut gin = Tensor::zeros(&self.input_shape);
        let gd = gin.data_mut();
        for (&i, &g) in argmax.iter().zip(grad_out.data()) {
            gd[i] += g;
        }
        Ok(gin)
    }
}
