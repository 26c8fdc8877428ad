//! MSE and coefficient-of-determination reports.

use std::fmt::Write as _;

use crate::data::{ExampleSource, Split};
use crate::error::{Error, Result};
use crate::model::{Model, N_TARGETS};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub split: Split,
    pub n_examples: usize,
    pub mse: f64,
    /// `None` for targets with zero variance in this split.
    pub r2_per_target: Vec<Option<f64>>,
    /// Mean over the defined entries of `r2_per_target`.
    pub mean_r2: f64,
    pub zero_variance_targets: usize,
}

impl MetricsReport {
    /// `key=value` text report.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "split={}", self.split);
        let _ = writeln!(out, "n_examples={}", self.n_examples);
        let _ = writeln!(out, "mse={:.16e}", self.mse);
        let _ = writeln!(out, "mean_r2={:.16e}", self.mean_r2);
        for (d, r2) in self.r2_per_target.iter().enumerate() {
            match r2 {
                Some(v) => {
                    let _ = writeln!(out, "r2_{d}={v:.16e}");
                }
                None => {
                    let _ = writeln!(out, "r2_{d}=undefined");
                }
            }
        }
        let _ = writeln!(out, "zero_variance_targets={}", self.zero_variance_targets);
        out
    }
}

/// MSE over all elements and per-column R² with SS_tot taken about this data's own column means.
pub fn regression_metrics(
    pred: &[f64],
    target: &[f64],
    n_targets: usize,
) -> Result<(f64, Vec<Option<f64>>)> {
    if pred.len() != target.len()
        || n_targets == 0
        || !pred.len().is_multiple_of(n_targets)
        || pred.is_empty()
    {
        return Err(Error::dim(
            "regression_metrics",
            &[pred.len()],
            &[target.len()],
        ));
    }
    let rows = pred.len() / n_targets;
    let mut sq = 0.0;
    for (p, t) in pred.iter().zip(target) {
        sq += (p - t) * (p - t);
    }
    let mse = sq / pred.len() as f64;

    let mut mean = vec![0.0; n_targets];
    for row in target.chunks(n_targets) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= rows as f64;
    }
    let mut ss_res = vec![0.0; n_targets];
    let mut ss_tot = vec![0.0; n_targets];
    for (prow, trow) in pred.chunks(n_targets).zip(target.chunks(n_targets)) {
        for d in 0..n_targets {
            ss_res[d] += (trow[d] - prow[d]).powi(2);
            ss_tot[d] += (trow[d] - mean[d]).powi(2);
        }
    }
    let r2 = ss_res
        .iter()
        .zip(&ss_tot)
        .map(|(&res, &tot)| {
            if tot > 0.0 {
                Some(1.0 - res / tot)
            } else {
                None
            }
        })
        .collect();
    Ok((mse, r2))
}

/// Inference-mode predictions and targets for every example, flattened row-major.
pub fn predict_all<T: Scalar, S: ExampleSource<T> + ?Sized>(
    model: &mut Model<T>,
    data: &S,
    batch_size: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::Usage("cannot evaluate on an empty split".into()));
    }
    let batch_size = batch_size.max(1);
    let mut pred = Vec::with_capacity(data.len() * N_TARGETS);
    let mut target = Vec::with_capacity(data.len() * N_TARGETS);
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(batch_size) {
        let (x, y) = data.gather(chunk)?;
        let out = model.predict(&x)?;
        pred.extend(out.data().iter().map(|v| v.to_f64_lossy()));
        target.extend(y.data().iter().map(|v| v.to_f64_lossy()));
    }
    Ok((pred, target))
}

pub fn evaluate<T: Scalar, S: ExampleSource<T> + ?Sized>(
    model: &mut Model<T>,
    data: &S,
    split: Split,
    batch_size: usize,
) -> Result<MetricsReport> {
    let (pred, target) = predict_all(model, data, batch_size)?;
    let (mse, r2) = regression_metrics(&pred, &target, N_TARGETS)?;
    let defined: Vec<f64> = r2.iter().flatten().copied().collect();
    let mean_r2 = if defined.is_empty() {
        f64::NAN
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    Ok(MetricsReport {
        split,
        n_examples: data.len(),
        mse,
        zero_variance_targets: r2.len() - defined.len(),
        r2_per_target: r2,
        mean_r2,
    })
}
