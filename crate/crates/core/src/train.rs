//! Plain mini-batch SGD on the MSE objective with a dev-driven learning-rate
//! halving schedule and best-epoch checkpointing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ExampleSource, Split};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::metrics::evaluate;
use crate::model::{Gradients, Model};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without dev improvement before the learning rate is halved.
    pub patience_epochs: usize,
    /// Training stops at the first plateau after this many halvings.
    pub max_halvings: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            learning_rate: 0.05,
            patience_epochs: 1,
            max_halvings: 5,
            max_epochs: 100,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Usage("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Usage(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.patience_epochs == 0 {
            return Err(Error::Usage("patience_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean of squared differences over all elements, and its gradient `2 (pred - target) / n`.
pub fn mse_loss_and_grad<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::dim("mse_loss", pred.shape(), target.shape()));
    }
    let n = pred.len() as f64;
    let mut sq = 0.0;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p.to_f64_lossy() - t.to_f64_lossy();
        sq += d * d;
    }
    let scale = T::from_f64_lossy(2.0 / n);
    let grad = pred.zip(target, |p, t| (p - t) * scale)?;
    Ok((sq / n, grad))
}

/// `p <- p - lr * g` for every parameter.
pub fn sgd_step<T: Scalar>(model: &mut Model<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
    let mut params = model.parameters_mut();
    if params.len() != grads.tensors.len() {
        return Err(Error::dim(
            "sgd_step",
            &[params.len()],
            &[grads.tensors.len()],
        ));
    }
    for (p, g) in params.iter().zip(&grads.tensors) {
        if p.shape() != g.shape() {
            return Err(Error::dim("sgd_step", p.shape(), g.shape()));
        }
    }
    let lr = T::from_f64_lossy(lr);
    for (p, g) in params.iter_mut().zip(&grads.tensors) {
        for (pv, &gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub dev_mse: f64,
    /// Learning rate used during this epoch.
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,dev_mse,lr\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e}",
                e.epoch, e.train_mse, e.dev_mse, e.learning_rate
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// One forward/backward/update step on a batch; returns the batch loss.
pub fn train_step<T: Scalar>(
    model: &mut Model<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    lr: f64,
) -> Result<f64> {
    let pred = model.forward(x, Mode::Train)?;
    let (loss, grad) = mse_loss_and_grad(&pred, y)?;
    if !loss.is_finite() {
        return Ok(loss);
    }
    let grads = model.backward(&grad)?;
    sgd_step(model, &grads, lr)?;
    Ok(loss)
}

/// Trains with the default progress sink (none).
pub fn train<T, A, B>(
    model: Model<T>,
    train_data: &A,
    dev_data: &B,
    config: &TrainConfig,
) -> Result<(Model<T>, TrainHistory)>
where
    T: Scalar,
    A: ExampleSource<T> + ?Sized,
    B: ExampleSource<T> + ?Sized,
{
    train_with(model, train_data, dev_data, config, |_| {})
}

/// Runs the SGD loop and returns the parameters of the best dev epoch.
///
/// Each epoch is one pass over a seeded permutation of the training examples in
/// batches of `batch_size` (the final short batch is kept). After every epoch
/// both splits are evaluated with dropout off. If dev MSE fails to improve for
/// `patience_epochs` epochs the learning rate is halved; the run ends at the
/// first plateau after `max_halvings` halvings or after `max_epochs` epochs.
pub fn train_with<T, A, B>(
    mut model: Model<T>,
    train_data: &A,
    dev_data: &B,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model<T>, TrainHistory)>
where
    T: Scalar,
    A: ExampleSource<T> + ?Sized,
    B: ExampleSource<T> + ?Sized,
{
    config.validate()?;
    if train_data.is_empty() || dev_data.is_empty() {
        return Err(Error::Usage(
            "training needs non-empty train and dev splits".into(),
        ));
    }
    let expected = model.spec.input_shape;
    for shape in [train_data.input_shape(), dev_data.input_shape()] {
        if shape != expected {
            return Err(Error::dim(
                "training data vs model input",
                &shape,
                &expected,
            ));
        }
    }

    model.reseed_dropout(config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut lr = config.learning_rate;
    let mut history = TrainHistory::default();
    let mut best_dev = f64::INFINITY;
    let mut best_params: Vec<Tensor<T>> = model.parameters().into_iter().cloned().collect();
    let mut stale = 0;
    let mut halvings = 0;

    for epoch in 0..config.max_epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let (x, y) = train_data.gather(chunk)?;
            let loss = train_step(&mut model, &x, &y, lr)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite { epoch, batch, loss });
            }
        }

        let train_mse = evaluate(&mut model, train_data, Split::Train, config.batch_size)?.mse;
        let dev_mse = evaluate(&mut model, dev_data, Split::Dev, config.batch_size)?.mse;
        if !dev_mse.is_finite() || !train_mse.is_finite() {
            let loss = if dev_mse.is_finite() {
                train_mse
            } else {
                dev_mse
            };
            return Err(Error::NonFinite {
                epoch,
                batch: usize::MAX,
                loss,
            });
        }
        let record = EpochRecord {
            epoch,
            train_mse,
            dev_mse,
            learning_rate: lr,
        };
        history.epochs.push(record);
        on_epoch(&record);

        if dev_mse < best_dev {
            best_dev = dev_mse;
            history.best_epoch = epoch;
            best_params = model.parameters().into_iter().cloned().collect();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience_epochs {
                if halvings == config.max_halvings {
                    break;
                }
                lr *= 0.5;
                halvings += 1;
                stale = 0;
            }
        }
    }

    for (p, best) in model.parameters_mut().into_iter().zip(best_params) {
        *p = best;
    }
    Ok((model, history))
}
