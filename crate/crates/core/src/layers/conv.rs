//! Direct 3D convolution over `(batch, time, height, width, channel)` tensors.
//!
//! 2D convolution is the `kt = 1` case on a time-extent-1 input. Weights are laid
//! out `[kt, kh, kw, in_channels, filters]` so that for a fixed `(dt, dh)` tap the
//! input row `x[t, h, w..w+kw, :]` and the weight slab `W[dt, dh, :, :, :]` are both
//! contiguous. The convention is cross-correlation (no kernel flip).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::activation::{swish_grad, Activation};
use super::Mode;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{crop, pad_constant, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    Same,
    Valid,
}

/// `(before, after)` padding for "same" mode: `k - 1` split with the floor half first.
pub fn same_padding(kernel: usize) -> (usize, usize) {
    let total = kernel - 1;
    (total / 2, total - total / 2)
}

/// Output extent along one axis, or `None` if a valid-mode input is smaller than the kernel.
pub fn output_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Option<usize> {
    match padding {
        Padding::Same => Some(input.div_ceil(stride)),
        Padding::Valid if input >= kernel => Some((input - kernel) / stride + 1),
        Padding::Valid => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvConfig {
    pub filters: usize,
    pub kernel: [usize; 3],
    pub strides: [usize; 3],
    pub padding: [Padding; 3],
    pub activation: Activation,
}

impl ConvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filters == 0 || self.kernel.contains(&0) || self.strides.contains(&0) {
            return Err(Error::Usage(format!(
                "conv filters, kernel and strides must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// Output `(T', H', W')` for an input `(T, H, W)`.
    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for ax in 0..3 {
            out[ax] = output_extent(
                input[ax],
                self.kernel[ax],
                self.strides[ax],
                self.padding[ax],
            )
            .ok_or_else(|| {
                Error::dim(
                    "conv3d (valid input smaller than kernel)",
                    &input,
                    &self.kernel,
                )
            })?;
        }
        Ok(out)
    }

    pub fn param_count(&self, in_channels: usize) -> usize {
        self.kernel.iter().product::<usize>() * in_channels * self.filters + self.filters
    }

    fn pad_amounts(&self) -> [(usize, usize); 5] {
        let mut amounts = [(0, 0); 5];
        for ax in 0..3 {
            if self.padding[ax] == Padding::Same {
                amounts[ax + 1] = same_padding(self.kernel[ax]);
            }
        }
        amounts
    }
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check_input<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, cfg: &ConvConfig) -> Result<()> {
    cfg.validate()?;
    let ws = weights.shape();
    if input.rank() != 5 || ws.len() != 5 || input.shape()[4] != ws[3] {
        return Err(Error::dim("conv3d (channels)", input.shape(), ws));
    }
    if ws[..3] != cfg.kernel || ws[4] != cfg.filters {
        return Err(Error::dim("conv3d (weights)", ws, &cfg.kernel));
    }
    Ok(())
}

struct Geometry {
    padded: [usize; 3],
    out: [usize; 3],
    channels: usize,
    filters: usize,
    kernel: [usize; 3],
    strides: [usize; 3],
}

impl Geometry {
    fn new(padded_shape: &[usize], cfg: &ConvConfig) -> Self {
        let padded = [padded_shape[1], padded_shape[2], padded_shape[3]];
        let mut out = [0; 3];
        for ax in 0..3 {
            out[ax] = (padded[ax] - cfg.kernel[ax]) / cfg.strides[ax] + 1;
        }
        Self {
            padded,
            out,
            channels: padded_shape[4],
            filters: cfg.filters,
            kernel: cfg.kernel,
            strides: cfg.strides,
        }
    }

    fn sample_in(&self) -> usize {
        self.padded.iter().product::<usize>() * self.channels
    }

    fn sample_out(&self) -> usize {
        self.out.iter().product::<usize>() * self.filters
    }

    /// Calls `f(out_offset, in_offset, weight_offset)` for every output
    /// position of one sample, one call per `(dt, dh)` tap row.
    #[inline]
    fn for_each_row(&self, mut f: impl FnMut(usize, usize, usize)) {
        let [_, ph, pw] = self.padded;
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.strides;
        let c = self.channels;
        let row_len = kw * c;
        let mut out_off = 0;
        for t in 0..self.out[0] {
            for h in 0..self.out[1] {
                for w in 0..self.out[2] {
                    for dt in 0..kt {
                        for dh in 0..kh {
                            let in_off = (((t * st + dt) * ph + h * sh + dh) * pw + w * sw) * c;
                            let w_off = (dt * kh + dh) * row_len * self.filters;
                            f(out_off, in_off, w_off);
                        }
                    }
                    out_off += self.filters;
                }
            }
        }
    }
}

/// Convolution plus per-filter bias, without activation.
pub fn conv3d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    cfg: &ConvConfig,
) -> Result<Tensor<T>> {
    check_input(input, weights, cfg)?;
    if bias.len() != cfg.filters {
        return Err(Error::dim("conv3d (bias)", bias.shape(), &[cfg.filters]));
    }
    let s = input.shape();
    cfg.output_dims([s[1], s[2], s[3]])?;
    let padded = pad_constant(input, &cfg.pad_amounts(), T::zero())?;
    Ok(forward_padded(&padded, weights, bias.data(), cfg))
}

fn forward_padded<T: Scalar>(
    padded: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
    cfg: &ConvConfig,
) -> Tensor<T> {
    let geo = Geometry::new(padded.shape(), cfg);
    let batch = padded.shape()[0];
    let (n_in, n_out) = (geo.sample_in(), geo.sample_out());
    let row_len = geo.kernel[2] * geo.channels;
    let f = geo.filters;
    let w = weights.data();
    let mut out = vec![T::zero(); batch * n_out];
    out.par_chunks_mut(n_out)
        .zip(padded.data().par_chunks(n_in))
        .for_each(|(out, x)| {
            for o in out.chunks_mut(f) {
                o.copy_from_slice(bias);
            }
            geo.for_each_row(|o_off, i_off, w_off| {
                let o = &mut out[o_off..o_off + f];
                let xrow = &x[i_off..i_off + row_len];
                let slab = &w[w_off..w_off + row_len * f];
                for (&xv, wrow) in xrow.iter().zip(slab.chunks_exact(f)) {
                    for (acc, &wv) in o.iter_mut().zip(wrow) {
                        *acc += xv * wv;
                    }
                }
            });
        });
    let shape = vec![batch, geo.out[0], geo.out[1], geo.out[2], f];
    Tensor::new(shape, out).expect("conv output shape")
}

/// Exact gradients of [`conv3d_forward`] with respect to input, weights and bias.
pub fn conv3d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
    cfg: &ConvConfig,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    check_input(input, weights, cfg)?;
    let amounts = cfg.pad_amounts();
    let padded = pad_constant(input, &amounts, T::zero())?;
    backward_padded(grad_out, &padded, input.shape(), weights, cfg, need_input)
}

fn backward_padded<T: Scalar>(
    grad_out: &Tensor<T>,
    padded: &Tensor<T>,
    input_shape: &[usize],
    weights: &Tensor<T>,
    cfg: &ConvConfig,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let geo = Geometry::new(padded.shape(), cfg);
    let batch = padded.shape()[0];
    let expected = [batch, geo.out[0], geo.out[1], geo.out[2], geo.filters];
    if grad_out.shape() != expected {
        return Err(Error::dim("conv3d_backward", grad_out.shape(), &expected));
    }
    let (n_in, n_out) = (geo.sample_in(), geo.sample_out());
    let row_len = geo.kernel[2] * geo.channels;
    let f = geo.filters;
    let w = weights.data();
    let g = grad_out.data();

    // Weight and bias reductions run in sample order so results do not depend on thread count.
    let mut gw = vec![T::zero(); w.len()];
    let mut gb = vec![T::zero(); f];
    for (x, gs) in padded.data().chunks(n_in).zip(g.chunks(n_out)) {
        for go in gs.chunks(f) {
            for (b, &v) in gb.iter_mut().zip(go) {
                *b += v;
            }
        }
        geo.for_each_row(|o_off, i_off, w_off| {
            let go = &gs[o_off..o_off + f];
            let xrow = &x[i_off..i_off + row_len];
            let slab = &mut gw[w_off..w_off + row_len * f];
            for (&xv, grow) in xrow.iter().zip(slab.chunks_exact_mut(f)) {
                if xv == T::zero() {
                    continue;
                }
                for (acc, &gv) in grow.iter_mut().zip(go) {
                    *acc += xv * gv;
                }
            }
        });
    }

    let input_grad = if need_input {
        let mut gp = vec![T::zero(); batch * n_in];
        gp.par_chunks_mut(n_in)
            .zip(g.par_chunks(n_out))
            .for_each(|(gx, gs)| {
                geo.for_each_row(|o_off, i_off, w_off| {
                    let go = &gs[o_off..o_off + f];
                    let gxrow = &mut gx[i_off..i_off + row_len];
                    let slab = &w[w_off..w_off + row_len * f];
                    for (acc, wrow) in gxrow.iter_mut().zip(slab.chunks_exact(f)) {
                        let mut dot = T::zero();
                        for (&wv, &gv) in wrow.iter().zip(go) {
                            dot += wv * gv;
                        }
                        *acc += dot;
                    }
                });
            });
        let gp = Tensor::new(padded.shape().to_vec(), gp)?;
        let amounts = cfg.pad_amounts();
        let gin = if amounts.iter().all(|&(b, a)| b == 0 && a == 0) {
            gp
        } else {
            crop(&gp, &amounts)?
        };
        debug_assert_eq!(gin.shape(), input_shape);
        Some(gin)
    } else {
        None
    };

    Ok(ConvGrads {
        input: input_grad,
        weights: Tensor::new(weights.shape().to_vec(), gw)?,
        bias: Tensor::new(vec![f], gb)?,
    })
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    padded: Tensor<T>,
    input_shape: Vec<usize>,
    pre_activation: Option<Tensor<T>>,
}

/// Convolution layer with optional fused activation.
#[derive(Debug, Clone)]
pub struct Conv3d<T> {
    pub config: ConvConfig,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    cache: Option<ConvCache<T>>,
}

impl<T: Scalar> Conv3d<T> {
    pub fn new(config: ConvConfig, weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        config.validate()?;
        let ws = weights.shape();
        if ws.len() != 5 || ws[..3] != config.kernel || ws[4] != config.filters {
            return Err(Error::dim("Conv3d::new", ws, &config.kernel));
        }
        if bias.len() != config.filters {
            return Err(Error::dim(
                "Conv3d::new (bias)",
                bias.shape(),
                &[config.filters],
            ));
        }
        Ok(Self {
            config,
            weights,
            bias,
            cache: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[3]
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        check_input(x, &self.weights, &self.config)?;
        let s = x.shape();
        self.config.output_dims([s[1], s[2], s[3]])?;
        let padded = pad_constant(x, &self.config.pad_amounts(), T::zero())?;
        let mut out = forward_padded(&padded, &self.weights, self.bias.data(), &self.config);
        let pre_activation = match (self.config.activation, mode) {
            (Activation::Swish, Mode::Train) => Some(out.clone()),
            _ => None,
        };
        self.config.activation.apply_in_place(out.data_mut());
        self.cache = match mode {
            Mode::Train => Some(ConvCache {
                padded,
                input_shape: s.to_vec(),
                pre_activation,
            }),
            Mode::Inference => None,
        };
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>, need_input: bool) -> Result<ConvGrads<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| {
            Error::Usage("conv3d backward called without a cached training forward".into())
        })?;
        let g = match &cache.pre_activation {
            Some(z) => grad_out.zip(z, |g, z| g * swish_grad(z))?,
            None => grad_out.clone(),
        };
        backward_padded(
            &g,
            &cache.padded,
            &cache.input_shape,
            &self.weights,
            &self.config,
            need_input,
        )
    }
}
