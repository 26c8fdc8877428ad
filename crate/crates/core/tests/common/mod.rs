#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssi3d::layers::{
    swish_backward, swish_forward, Activation, Conv3d, ConvConfig, Dense, Dropout, MaxPool3d, Mode,
    Padding,
};
use ssi3d::{Result, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
pub const SEEDS: u64 = 25;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Relative error with a floor on the denominator so that entries which are
/// both numerically zero compare as equal.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Worst relative error between `analytic` and the central difference of
/// `loss` with respect to every entry of `param`.
pub fn check_entries(
    param: &mut Tensor<f64>,
    analytic: &Tensor<f64>,
    mut loss: impl FnMut(&Tensor<f64>) -> f64,
) -> f64 {
    assert_eq!(param.shape(), analytic.shape());
    let mut worst = 0.0f64;
    for i in 0..param.len() {
        let orig = param.data()[i];
        param.data_mut()[i] = orig + FD_STEP;
        let up = loss(param);
        param.data_mut()[i] = orig - FD_STEP;
        let down = loss(param);
        param.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic.data()[i], numeric));
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvCase {
    Same,
    Valid,
    Strided,
}

pub fn random_conv_config(case: ConvCase, rng: &mut ChaCha8Rng) -> ConvConfig {
    let kernel = [
        rng.random_range(1..=3),
        rng.random_range(1..=3),
        rng.random_range(1..=3),
    ];
    let (strides, padding) = match case {
        ConvCase::Same => ([1, 1, 1], [Padding::Same; 3]),
        ConvCase::Valid => ([1, 1, 1], [Padding::Valid; 3]),
        ConvCase::Strided => {
            let mut s = [
                rng.random_range(1..=2),
                rng.random_range(1..=3),
                rng.random_range(2..=3),
            ];
            s.shuffle(rng);
            let pad = [0; 3].map(|_| {
                if rng.random_bool(0.5) {
                    Padding::Same
                } else {
                    Padding::Valid
                }
            });
            (s, pad)
        }
    };
    ConvConfig {
        filters: rng.random_range(1..=3),
        kernel,
        strides,
        padding,
        activation: if rng.random_bool(0.5) {
            Activation::Swish
        } else {
            Activation::Linear
        },
    }
}

pub fn random_conv_input(cfg: &ConvConfig, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let dims: Vec<usize> = (0..3)
        .map(|a| cfg.kernel[a] + rng.random_range(0..=3))
        .collect();
    let shape = [
        rng.random_range(1..=2),
        dims[0],
        dims[1],
        dims[2],
        rng.random_range(1..=3),
    ];
    random(&shape, rng)
}

/// Gradient check for a conv layer (with its activation) against input, weights and bias.
pub fn conv_grad_error(case: ConvCase, seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let cfg = random_conv_config(case, &mut rng);
    let x = random_conv_input(&cfg, &mut rng);
    let c = x.shape()[4];
    let w = random(
        &[cfg.kernel[0], cfg.kernel[1], cfg.kernel[2], c, cfg.filters],
        &mut rng,
    );
    let b = random(&[cfg.filters], &mut rng);
    let mut layer = Conv3d::new(cfg, w, b)?;
    let y = layer.forward(&x, Mode::Train)?;
    let r = random(y.shape(), &mut rng);
    let grads = layer.backward(&r, true)?;

    let mut probe = layer.clone();
    let mut xs = x.clone();
    let mut worst = check_entries(&mut xs, grads.input.as_ref().unwrap(), |xp| {
        dot(&probe.forward(xp, Mode::Inference).unwrap(), &r)
    });
    let mut ws = layer.weights.clone();
    worst = worst.max(check_entries(&mut ws, &grads.weights, |wp| {
        probe.weights = wp.clone();
        dot(&probe.forward(&x, Mode::Inference).unwrap(), &r)
    }));
    probe.weights = layer.weights.clone();
    let mut bs = layer.bias.clone();
    worst = worst.max(check_entries(&mut bs, &grads.bias, |bp| {
        probe.bias = bp.clone();
        dot(&probe.forward(&x, Mode::Inference).unwrap(), &r)
    }));
    Ok(worst)
}

pub fn dense_grad_error(seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let (n, i, o) = (
        rng.random_range(1..=4),
        rng.random_range(1..=8),
        rng.random_range(1..=6),
    );
    let act = if seed.is_multiple_of(2) {
        Activation::Swish
    } else {
        Activation::Linear
    };
    let x = random(&[n, i], &mut rng);
    let mut layer = Dense::new(random(&[i, o], &mut rng), random(&[o], &mut rng), act)?;
    let y = layer.forward(&x, Mode::Train)?;
    let r = random(y.shape(), &mut rng);
    let grads = layer.backward(&r)?;

    let mut probe = layer.clone();
    let mut xs = x.clone();
    let mut worst = check_entries(&mut xs, &grads.input, |xp| {
        dot(&probe.forward(xp, Mode::Inference).unwrap(), &r)
    });
    let mut ws = layer.weights.clone();
    worst = worst.max(check_entries(&mut ws, &grads.weights, |wp| {
        probe.weights = wp.clone();
        dot(&probe.forward(&x, Mode::Inference).unwrap(), &r)
    }));
    probe.weights = layer.weights.clone();
    let mut bs = layer.bias.clone();
    worst = worst.max(check_entries(&mut bs, &grads.bias, |bp| {
        probe.bias = bp.clone();
        dot(&probe.forward(&x, Mode::Inference).unwrap(), &r)
    }));
    Ok(worst)
}

pub fn swish_grad_error(seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let shape = [
        rng.random_range(1..=3),
        rng.random_range(1..=5),
        rng.random_range(1..=5),
    ];
    let x = Tensor::from_fn(&shape, |_| rng.random_range(-6.0..6.0));
    let r = random(&shape, &mut rng);
    let analytic = swish_backward(&r, &x)?;
    let mut xs = x.clone();
    Ok(check_entries(&mut xs, &analytic, |xp| {
        dot(&swish_forward(xp), &r)
    }))
}

pub fn dropout_grad_error(seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let shape = [
        rng.random_range(1..=3),
        rng.random_range(1..=6),
        rng.random_range(1..=4),
    ];
    let rate = rng.random_range(0.05..0.8);
    let x = random(&shape, &mut rng);
    let keep: Vec<bool> = (0..x.len()).map(|_| rng.random::<f64>() >= rate).collect();
    let r = random(&shape, &mut rng);
    let mut layer = Dropout::new(rate, seed)?;
    layer.forward_masked(&x, &keep)?;
    let analytic = layer.backward(&r)?;
    let mut probe = Dropout::new(rate, seed)?;
    let mut xs = x.clone();
    Ok(check_entries(&mut xs, &analytic, |xp| {
        dot(&probe.forward_masked(xp, &keep).unwrap(), &r)
    }))
}

/// Max pooling checked on inputs whose window maxima are separated from the
/// runner-up by far more than the finite-difference step.
pub fn maxpool_grad_error(seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let pool = [
        rng.random_range(1..=2),
        rng.random_range(1..=3),
        rng.random_range(1..=3),
    ];
    let shape = [
        rng.random_range(1..=2),
        pool[0] * rng.random_range(1..=2),
        pool[1] * rng.random_range(1..=3),
        pool[2] * rng.random_range(1..=3) + rng.random_range(0..pool[2]),
        rng.random_range(1..=3),
    ];
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| i as f64 * 1e-2).collect();
    values.shuffle(&mut rng);
    let x = Tensor::new(shape.to_vec(), values)?;
    let mut layer = MaxPool3d::new(pool)?;
    let y = layer.forward(&x, Mode::Train)?;
    let r = random(y.shape(), &mut rng);
    let analytic = layer.backward(&r)?;
    let mut probe = MaxPool3d::new(pool)?;
    let mut xs = x.clone();
    Ok(check_entries(&mut xs, &analytic, |xp| {
        dot(&probe.forward(xp, Mode::Inference).unwrap(), &r)
    }))
}

/// Textbook seven-loop 3D cross-correlation with explicit zero padding, no activation.
pub fn naive_conv3d(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    cfg: &ConvConfig,
) -> Tensor<f64> {
    let [n, ti, hi, wi, c] = [
        x.shape()[0],
        x.shape()[1],
        x.shape()[2],
        x.shape()[3],
        x.shape()[4],
    ];
    let inp = [ti, hi, wi];
    let f = cfg.filters;
    let mut out_dims = [0; 3];
    let mut before = [0isize; 3];
    for a in 0..3 {
        let (k, s) = (cfg.kernel[a], cfg.strides[a]);
        match cfg.padding[a] {
            Padding::Same => {
                out_dims[a] = inp[a].div_ceil(s);
                before[a] = ((k - 1) / 2) as isize;
            }
            Padding::Valid => {
                out_dims[a] = (inp[a] - k) / s + 1;
                before[a] = 0;
            }
        }
    }
    let mut out = Tensor::zeros(&[n, out_dims[0], out_dims[1], out_dims[2], f]);
    for bi in 0..n {
        for ot in 0..out_dims[0] {
            for oh in 0..out_dims[1] {
                for ow in 0..out_dims[2] {
                    for fi in 0..f {
                        let mut acc = b.data()[fi];
                        for kt in 0..cfg.kernel[0] {
                            for kh in 0..cfg.kernel[1] {
                                for kw in 0..cfg.kernel[2] {
                                    let it = (ot * cfg.strides[0] + kt) as isize - before[0];
                                    let ih = (oh * cfg.strides[1] + kh) as isize - before[1];
                                    let iw = (ow * cfg.strides[2] + kw) as isize - before[2];
                                    if it < 0
                                        || ih < 0
                                        || iw < 0
                                        || it >= ti as isize
                                        || ih >= hi as isize
                                        || iw >= wi as isize
                                    {
                                        continue;
                                    }
                                    for ci in 0..c {
                                        acc +=
                                            x.get(&[bi, it as usize, ih as usize, iw as usize, ci])
                                                * w.get(&[kt, kh, kw, ci, fi]);
                                    }
                                }
                            }
                        }
                        out.set(&[bi, ot, oh, ow, fi], acc);
                    }
                }
            }
        }
    }
    out
}

/// Independent 2D convolution over `[n, h, w, c]` with `[kh, kw, c, f]` weights.
///
/// Accumulates bias first, then taps in (kh, kw, c) order, matching the
/// library's per-tap summation order so the results agree bit for bit.
pub fn naive_conv2d(
    x: &[f64],
    [n, h, w, c]: [usize; 4],
    wt: &[f64],
    [kh, kw, f]: [usize; 3],
    bias: &[f64],
    [sh, sw]: [usize; 2],
    [ph, pw]: [usize; 2],
    [oh, ow]: [usize; 2],
) -> Vec<f64> {
    let mut out = vec![0.0; n * oh * ow * f];
    for b in 0..n {
        for y in 0..oh {
            for xo in 0..ow {
                let o = ((b * oh + y) * ow + xo) * f;
                out[o..o + f].copy_from_slice(bias);
                for dy in 0..kh {
                    let iy = (y * sh + dy) as isize - ph as isize;
                    for dx in 0..kw {
                        let ix = (xo * sw + dx) as isize - pw as isize;
                        let inside = (0..h as isize).contains(&iy) && (0..w as isize).contains(&ix);
                        for ci in 0..c {
                            let v = if inside {
                                x[((b * h + iy as usize) * w + ix as usize) * c + ci]
                            } else {
                                0.0
                            };
                            for fi in 0..f {
                                out[o + fi] += v * wt[((dy * kw + dx) * c + ci) * f + fi];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Largest |library - naive| over one randomized conv3d case.
pub fn conv_oracle_error(seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let case = [ConvCase::Same, ConvCase::Valid, ConvCase::Strided][(seed % 3) as usize];
    let mut cfg = random_conv_config(case, &mut rng);
    cfg.activation = Activation::Linear;
    let x = random_conv_input(&cfg, &mut rng);
    let c = x.shape()[4];
    let w = random(
        &[cfg.kernel[0], cfg.kernel[1], cfg.kernel[2], c, cfg.filters],
        &mut rng,
    );
    let b = random(&[cfg.filters], &mut rng);
    let got = ssi3d::layers::conv3d_forward(&x, &w, &b, &cfg)?;
    let want = naive_conv3d(&x, &w, &b, &cfg);
    assert_eq!(got.shape(), want.shape());
    Ok(got
        .data()
        .iter()
        .zip(want.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Number of mismatched elements between the library with kt = 1 and [`naive_conv2d`].
pub fn conv2d_mismatches(seed: u64) -> Result<usize> {
    let mut rng = rng(seed);
    let (kh, kw) = (rng.random_range(1..=5), rng.random_range(1..=5));
    let (sh, sw) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let same = rng.random_bool(0.5);
    let (n, c, f) = (
        rng.random_range(1..=2),
        rng.random_range(1..=3),
        rng.random_range(1..=4),
    );
    let (h, w) = (kh + rng.random_range(0..=6), kw + rng.random_range(0..=6));
    let pad = if same { Padding::Same } else { Padding::Valid };
    let cfg = ConvConfig {
        filters: f,
        kernel: [1, kh, kw],
        strides: [1, sh, sw],
        padding: [Padding::Valid, pad, pad],
        activation: Activation::Linear,
    };
    let x = random(&[n, 1, h, w, c], &mut rng);
    let wt = random(&[1, kh, kw, c, f], &mut rng);
    let b = random(&[f], &mut rng);
    let got = ssi3d::layers::conv3d_forward(&x, &wt, &b, &cfg)?;
    let (oh, ow, ph, pw) = if same {
        (h.div_ceil(sh), w.div_ceil(sw), (kh - 1) / 2, (kw - 1) / 2)
    } else {
        ((h - kh) / sh + 1, (w - kw) / sw + 1, 0, 0)
    };
    let want = naive_conv2d(
        x.data(),
        [n, h, w, c],
        wt.data(),
        [kh, kw, f],
        b.data(),
        [sh, sw],
        [ph, pw],
        [oh, ow],
    );
    assert_eq!(got.shape(), &[n, 1, oh, ow, f]);
    Ok(got
        .data()
        .iter()
        .zip(&want)
        .filter(|(a, b)| a.to_bits() != b.to_bits())
        .count())
}

/// Gradient check of a whole tiny model (dropout off) on 40 sampled parameters.
pub fn model_grad_error(seed: u64) -> Result<f64> {
    use ssi3d::model::{Model, ModelSpec, Scale, TemporalMode};
    let spec = match seed % 3 {
        0 => ModelSpec::fcn(Scale::Tiny),
        1 => ModelSpec::cnn2d(Scale::Tiny),
        _ => ModelSpec::cnn3d(Scale::Tiny, 2, TemporalMode::Sampled)?,
    };
    let mut rng = rng(seed);
    let mut model = Model::<f64>::build(spec, seed)?;
    model.set_dropout_rate(0.0)?;
    let x = random(&model.input_shape(2), &mut rng);
    let y = model.forward(&x, Mode::Train)?;
    let r = random(y.shape(), &mut rng);
    let grads = model.backward(&r)?;

    let mut worst = 0.0f64;
    for _ in 0..40 {
        let k = rng.random_range(0..grads.tensors.len());
        let i = rng.random_range(0..grads.tensors[k].len());
        let orig = model.parameters()[k].data()[i];
        let mut eval_at = |v: f64| {
            model.parameters_mut()[k].data_mut()[i] = v;
            dot(&model.forward(&x, Mode::Inference).unwrap(), &r)
        };
        let numeric = (eval_at(orig + FD_STEP) - eval_at(orig - FD_STEP)) / (2.0 * FD_STEP);
        eval_at(orig);
        worst = worst.max(rel_err(grads.tensors[k].data()[i], numeric));
    }
    Ok(worst)
}
