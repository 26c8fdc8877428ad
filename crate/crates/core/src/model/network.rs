use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{LayerSpec, ModelSpec};
use crate::error::{Error, Result};
use crate::layers::{Conv3d, Dense, Dropout, Flatten, Layer, MaxPool3d, Mode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Parameter gradients in [`Model::parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Tensor<T>>,
}

/// An instantiated network: a [`ModelSpec`] plus its parameter state.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub spec: ModelSpec,
    pub seed: u64,
    layers: Vec<Layer<T>>,
}

fn glorot_uniform<T: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| {
        T::from_f64_lossy(rng.random_range(-limit..limit))
    })
}

/// Glorot-uniform weights and zero biases, one tensor pair per weighted layer,
/// fully determined by `seed`.
pub fn init_params<T: Scalar>(spec: &ModelSpec, seed: u64) -> Result<Vec<Tensor<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(init_shapes(spec)?
        .iter()
        .map(|shape| match shape.as_slice() {
            [_] => Tensor::zeros(shape),
            [fan_in, fan_out] => glorot_uniform(shape, *fan_in, *fan_out, &mut rng),
            [kt, kh, kw, c, f] => {
                let taps = kt * kh * kw;
                glorot_uniform(shape, taps * c, taps * f, &mut rng)
            }
            _ => unreachable!("parameter shapes are rank 1, 2 or 5"),
        })
        .collect())
}

impl<T: Scalar> Model<T> {
    pub fn build(spec: ModelSpec, seed: u64) -> Result<Self> {
        let params = init_params(&spec, seed)?;
        Self::from_parameters(spec, seed, params)
    }

    /// Assembles a model from explicit parameter tensors in spec order.
    pub fn from_parameters(spec: ModelSpec, seed: u64, params: Vec<Tensor<T>>) -> Result<Self> {
        let expected = init_shapes(&spec)?;
        if expected.len() != params.len() {
            return Err(Error::dim(
                "model parameters",
                &[expected.len()],
                &[params.len()],
            ));
        }
        for (shape, p) in expected.iter().zip(&params) {
            if shape.as_slice() != p.shape() {
                return Err(Error::dim("model parameter shape", shape, p.shape()));
            }
        }
        let mut params = params.into_iter();
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, l) in spec.layers.iter().enumerate() {
            let layer = match l {
                LayerSpec::Conv(c) => {
                    let w = params.next().expect("checked count");
                    let b = params.next().expect("checked count");
                    Layer::Conv(Conv3d::new(*c, w, b)?)
                }
                LayerSpec::Dense { activation, .. } => {
                    let w = params.next().expect("checked count");
                    let b = params.next().expect("checked count");
                    Layer::Dense(Dense::new(w, b, *activation)?)
                }
                LayerSpec::Dropout { rate } => {
                    let mut d = Dropout::new(*rate, seed)?;
                    d.reseed(seed, i as u64);
                    Layer::Dropout(d)
                }
                LayerSpec::MaxPool { pool } => Layer::MaxPool(MaxPool3d::new(*pool)?),
                LayerSpec::Flatten => Layer::Flatten(Flatten::default()),
            };
            layers.push(layer);
        }
        Ok(Self { spec, seed, layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.parameters()).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.parameters_mut())
            .collect()
    }

    /// Exact total of all weight and bias elements.
    pub fn count_params(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Restarts every dropout mask stream from `seed`.
    pub fn reseed_dropout(&mut self, seed: u64) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            if let Layer::Dropout(d) = l {
                d.reseed(seed, i as u64);
            }
        }
    }

    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        for l in &mut self.layers {
            if let Layer::Dropout(d) = l {
                d.set_rate(rate)?;
            }
        }
        Ok(())
    }

    /// Expected input shape for a batch of `batch` examples.
    pub fn input_shape(&self, batch: usize) -> [usize; 5] {
        let [t, h, w, c] = self.spec.input_shape;
        [batch, t, h, w, c]
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let expected = self.input_shape(x.shape()[0]);
        if x.shape() != expected {
            return Err(Error::dim("model input", x.shape(), &expected));
        }
        let mut h = self.layers[0].forward(x, mode)?;
        for layer in &mut self.layers[1..] {
            h = layer.forward(&h, mode)?;
        }
        Ok(h)
    }

    /// Inference-mode forward pass.
    pub fn predict(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward(x, Mode::Inference)
    }

    /// Backpropagates `grad_out` through the cached training forward pass.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Gradients<T>> {
        let mut per_layer: Vec<Vec<Tensor<T>>> = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        let n = self.layers.len();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            // The input gradient of the bottom layer is never needed.
            let need_input = i > 0;
            let (gin, params) = layer.backward(&g, need_input)?;
            per_layer.push(params);
            if let Some(gin) = gin {
                g = gin;
            }
        }
        debug_assert_eq!(per_layer.len(), n);
        Ok(Gradients {
            tensors: per_layer.into_iter().rev().flatten().collect(),
        })
    }

    /// Converts the parameters to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Result<Model<U>> {
        let params = self.parameters().into_iter().map(|p| p.cast()).collect();
        Model::from_parameters(self.spec.clone(), self.seed, params)
    }
}

fn init_shapes(spec: &ModelSpec) -> Result<Vec<Vec<usize>>> {
    let summary = spec.summarize()?;
    let mut in_shape: Vec<usize> = spec.input_shape.to_vec();
    let mut shapes = Vec::new();
    for row in &summary {
        match &row.spec {
            LayerSpec::Conv(c) => {
                shapes.push(vec![
                    c.kernel[0],
                    c.kernel[1],
                    c.kernel[2],
                    in_shape[3],
                    c.filters,
                ]);
                shapes.push(vec![c.filters]);
            }
            LayerSpec::Dense { units, .. } => {
                shapes.push(vec![in_shape[0], *units]);
                shapes.push(vec![*units]);
            }
            _ => {}
        }
        in_shape = row.output_shape.clone();
    }
    Ok(shapes)
}
