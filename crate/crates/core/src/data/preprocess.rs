//! Frame resampling, intensity normalization and target standardization.
//!
//! Every statistic is fitted on the train split only and then applied unchanged
//! to dev and test data.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::N_TARGETS;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::container::UltrasoundSequence;

/// Linearly resamples every scan line (the height axis) of `[N, H, W, 1]`
/// frames to `out_h` samples spanning `[0, H - 1]`.
pub fn resample_scanlines<T: Scalar>(frames: &Tensor<T>, out_h: usize) -> Result<Tensor<T>> {
    let s = frames.shape();
    if s.len() != 4 {
        return Err(Error::Usage(format!(
            "resample_scanlines expects [N, H, W, 1], got {s:?}"
        )));
    }
    let (n, h, w) = (s[0], s[1], s[2]);
    if h < 2 {
        return Err(Error::Usage(format!(
            "resample_scanlines needs at least 2 samples per line, got {h}"
        )));
    }
    if out_h == 0 {
        return Err(Error::Usage(
            "resample_scanlines: out_h must be positive".into(),
        ));
    }
    if out_h == h {
        return Ok(frames.clone());
    }
    let nodes: Vec<(usize, T)> = (0..out_h)
        .map(|k| {
            let pos = if out_h == 1 {
                0.0
            } else {
                k as f64 * (h - 1) as f64 / (out_h - 1) as f64
            };
            let lo = (pos.floor() as usize).min(h - 2);
            (lo, T::from_f64_lossy(pos - lo as f64))
        })
        .collect();
    let src = frames.data();
    let mut out = Vec::with_capacity(n * out_h * w);
    for f in 0..n {
        let frame = &src[f * h * w..(f + 1) * h * w];
        for &(lo, frac) in &nodes {
            let a = &frame[lo * w..(lo + 1) * w];
            let b = &frame[(lo + 1) * w..(lo + 2) * w];
            out.extend(a.iter().zip(b).map(|(&a, &b)| a + (b - a) * frac));
        }
    }
    Tensor::new(vec![n, out_h, w, 1], out)
}

/// Global pixel range of the train split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit<'a>(train_frames: impl IntoIterator<Item = &'a Tensor<f32>>) -> Result<Self> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for t in train_frames {
            for &v in t.data() {
                min = min.min(v as f64);
                max = max.max(v as f64);
            }
        }
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::Data(
                "cannot fit pixel range on an empty train split".into(),
            ));
        }
        Ok(Self { min, max })
    }

    /// `2 (x - min) / (max - min) - 1`; all zeros when `max == min`.
    pub fn apply<T: Scalar>(&self, frames: &Tensor<T>) -> Tensor<T> {
        let range = self.max - self.min;
        if range == 0.0 {
            return Tensor::zeros(frames.shape());
        }
        frames.map(|x| T::from_f64_lossy(2.0 * (x.to_f64_lossy() - self.min) / range - 1.0))
    }
}

pub fn minmax_normalize<T: Scalar>(frames: &Tensor<T>, stats: &MinMax) -> Tensor<T> {
    stats.apply(frames)
}

/// Per-target mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetScaler {
    pub mean: [f64; N_TARGETS],
    pub std: [f64; N_TARGETS],
}

impl TargetScaler {
    pub fn fit<'a>(train_targets: impl IntoIterator<Item = &'a Tensor<f32>>) -> Result<Self> {
        let targets: Vec<&Tensor<f32>> = train_targets.into_iter().collect();
        let mut n = 0usize;
        let mut mean = [0.0; N_TARGETS];
        for t in &targets {
            for row in t.data().chunks(N_TARGETS) {
                for (m, &v) in mean.iter_mut().zip(row) {
                    *m += v as f64;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Data(
                "cannot fit target scaler on an empty train split".into(),
            ));
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = [0.0; N_TARGETS];
        for t in &targets {
            for row in t.data().chunks(N_TARGETS) {
                for ((acc, &v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *acc += (v as f64 - m).powi(2);
                }
            }
        }
        let mut std = [0.0; N_TARGETS];
        for (d, (s, v)) in std.iter_mut().zip(var).enumerate() {
            *s = (v / n as f64).sqrt();
            if *s == 0.0 || !s.is_finite() {
                return Err(Error::Data(format!(
                    "target dimension {d} has zero variance in the train split"
                )));
            }
        }
        Ok(Self { mean, std })
    }

    pub fn apply<T: Scalar>(&self, targets: &Tensor<T>) -> Result<Tensor<T>> {
        self.transform(targets, |v, m, s| (v - m) / s)
    }

    pub fn inverse<T: Scalar>(&self, targets: &Tensor<T>) -> Result<Tensor<T>> {
        self.transform(targets, |v, m, s| v * s + m)
    }

    fn transform<T: Scalar>(
        &self,
        targets: &Tensor<T>,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<Tensor<T>> {
        if targets.rank() != 2 || targets.shape()[1] != N_TARGETS {
            return Err(Error::dim("target scaler", targets.shape(), &[N_TARGETS]));
        }
        let mut out = targets.clone();
        for row in out.data_mut().chunks_mut(N_TARGETS) {
            for (d, v) in row.iter_mut().enumerate() {
                *v = T::from_f64_lossy(f(v.to_f64_lossy(), self.mean[d], self.std[d]));
            }
        }
        Ok(out)
    }
}

/// Everything fitted on the train split; persisted next to checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub pixels: MinMax,
    pub targets: TargetScaler,
}

impl NormalizationStats {
    /// Fits pixel range and target scaler. Only pass train-split sequences.
    pub fn fit(train: &[UltrasoundSequence]) -> Result<Self> {
        Ok(Self {
            pixels: MinMax::fit(train.iter().map(|s| &s.frames))?,
            targets: TargetScaler::fit(train.iter().map(|s| &s.targets))?,
        })
    }

    /// `key=value` lines with 17 significant digits so values read back bit-exactly.
    pub fn render(&self) -> String {
        let mut out =
            String::from("# pixel range and target standardization fitted on the train split\n");
        let mut put = |k: String, v: f64| out.push_str(&format!("{k}={v:.16e}\n"));
        put("pixel_min".into(), self.pixels.min);
        put("pixel_max".into(), self.pixels.max);
        for d in 0..N_TARGETS {
            put(format!("target_mean_{d}"), self.targets.mean[d]);
        }
        for d in 0..N_TARGETS {
            put(format!("target_std_{d}"), self.targets.std[d]);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = HashMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("stats line {line:?} is not key=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|e| Error::Data(format!("stats key {k}: {e}")))?;
            kv.insert(k.trim().to_owned(), v);
        }
        let get = |k: &str| {
            kv.get(k)
                .copied()
                .ok_or_else(|| Error::Data(format!("stats file is missing {k}")))
        };
        let mut mean = [0.0; N_TARGETS];
        let mut std = [0.0; N_TARGETS];
        for d in 0..N_TARGETS {
            mean[d] = get(&format!("target_mean_{d}"))?;
            std[d] = get(&format!("target_std_{d}"))?;
        }
        Ok(Self {
            pixels: MinMax {
                min: get("pixel_min")?,
                max: get("pixel_max")?,
            },
            targets: TargetScaler { mean, std },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn targets_from(rows: &[[f32; N_TARGETS]]) -> Tensor<f32> {
        Tensor::new(
            vec![rows.len(), N_TARGETS],
            rows.iter().flatten().copied().collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_frame_resamples_to_constant() {
        let f = Tensor::full(&[2, 946, 3, 1], 4.25f64);
        let r = resample_scanlines(&f, 128).unwrap();
        assert_eq!(r.shape(), &[2, 128, 3, 1]);
        assert!(r.data().iter().all(|&v| v == 4.25));
    }

    #[test]
    fn matching_height_is_identity() {
        let f = Tensor::from_fn(&[1, 128, 4, 1], |i| i as f64 * 0.5);
        assert_eq!(resample_scanlines(&f, 128).unwrap(), f);
    }

    #[test]
    fn linear_ramp_is_reproduced() {
        let f = Tensor::from_fn(&[1, 946, 2, 1], |i| (i / 2) as f64);
        let r = resample_scanlines(&f, 128).unwrap();
        for k in 0..128 {
            let expect = 945.0 * k as f64 / 127.0;
            for w in 0..2 {
                assert!((r.get(&[0, k, w, 0]) - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn too_short_scanline_is_usage_error() {
        let f = Tensor::<f32>::zeros(&[1, 1, 4, 1]);
        assert!(matches!(resample_scanlines(&f, 128), Err(Error::Usage(_))));
    }

    #[test]
    fn minmax_examples() {
        let stats = MinMax {
            min: 0.0,
            max: 255.0,
        };
        let t = Tensor::new(vec![3], vec![0.0f64, 255.0, 127.5]).unwrap();
        assert_eq!(stats.apply(&t).data(), &[-1.0, 1.0, 0.0]);
        let flat = MinMax { min: 3.0, max: 3.0 };
        assert!(flat.apply(&t).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaler_hand_example() {
        let mut rows = [[1.0f32; N_TARGETS]; 3];
        for (i, r) in rows.iter_mut().enumerate() {
            r[0] = 2.0 * (i as f32 + 1.0);
            r[1] = i as f32;
        }
        let t = targets_from(&rows);
        let s = TargetScaler::fit([&t]);
        // Column 2.. is constant, so fitting must fail naming that dimension.
        assert!(matches!(s, Err(Error::Data(ref m)) if m.contains("dimension 2")));

        for (i, r) in rows.iter_mut().enumerate() {
            for (d, v) in r.iter_mut().enumerate().skip(2) {
                *v = (i * d) as f32;
            }
        }
        let t = targets_from(&rows);
        let s = TargetScaler::fit([&t]).unwrap();
        assert!((s.mean[0] - 4.0).abs() < 1e-12);
        assert!((s.std[0] - 1.632993161855452).abs() < 1e-6);
        let z = s.apply(&t.cast::<f64>()).unwrap();
        assert!((z.get(&[0, 0]) + 1.224745).abs() < 1e-6);
        assert!(z.get(&[1, 0]).abs() < 1e-12);
        assert!((z.get(&[2, 0]) - 1.224745).abs() < 1e-6);
    }

    #[test]
    fn stats_file_round_trip_is_bit_exact() {
        let mut mean = [0.0; N_TARGETS];
        let mut std = [0.0; N_TARGETS];
        for d in 0..N_TARGETS {
            mean[d] = (d as f64 * 1.37).sin() / 3.0;
            std[d] = 0.1 + (d as f64 * 0.77).cos().abs() * std::f64::consts::PI;
        }
        let stats = NormalizationStats {
            pixels: MinMax {
                min: -0.123_456_789_012_345_68,
                max: 1.0 / 3.0,
            },
            targets: TargetScaler { mean, std },
        };
        let back = NormalizationStats::parse(&stats.render()).unwrap();
        assert_eq!(back, stats);
        for d in 0..N_TARGETS {
            assert_eq!(back.targets.mean[d].to_bits(), mean[d].to_bits());
        }
    }

    proptest! {
        #[test]
        fn scaler_inverse_round_trip(values in prop::collection::vec(-50.0f32..50.0, N_TARGETS * 6)) {
            let t = Tensor::new(vec![6, N_TARGETS], values).unwrap();
            if let Ok(s) = TargetScaler::fit([&t]) {
                let t64 = t.cast::<f64>();
                let back = s.inverse(&s.apply(&t64).unwrap()).unwrap();
                for (a, b) in back.data().iter().zip(t64.data()) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }
}
