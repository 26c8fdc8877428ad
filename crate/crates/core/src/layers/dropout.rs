use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Mode;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` during training,
/// inference is the identity.
#[derive(Debug, Clone)]
pub struct Dropout<T> {
    rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<T>>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Usage(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        Ok(Self {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn set_rate(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Usage(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        self.rate = rate;
        Ok(())
    }

    /// Restarts the mask stream. Identical seeds give identical mask sequences.
    pub fn reseed(&mut self, seed: u64, stream: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.rng.set_stream(stream);
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode == Mode::Inference || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let keep: Vec<bool> = (0..x.len())
            .map(|_| self.rng.random::<f64>() >= self.rate)
            .collect();
        self.forward_masked(x, &keep)
    }

    /// Training forward with an explicit keep-mask instead of a random draw.
    pub fn forward_masked(&mut self, x: &Tensor<T>, keep: &[bool]) -> Result<Tensor<T>> {
        if keep.len() != x.len() {
            return Err(Error::dim("dropout mask", x.shape(), &[keep.len()]));
        }
        let scale = T::from_f64_lossy(1.0 / (1.0 - self.rate));
        let mask: Vec<T> = keep
            .iter()
            .map(|&k| if k { scale } else { T::zero() })
            .collect();
        let mut out = x.clone();
        for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(mask);
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let Some(mask) = &self.mask else {
            return Ok(grad_out.clone());
        };
        if mask.len() != grad_out.len() {
            return Err(Error::dim(
                "dropout_backward",
                grad_out.shape(),
                &[mask.len()],
            ));
        }
        let mut g = grad_out.clone();
        for (v, &m) in g.data_mut().iter_mut().zip(mask) {
            *v *= m;
        }
        Ok(g)
    }
}
