//! Declarative layer lists for the fully connected, 2D and 3D convolutional networks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Activation, ConvConfig, Padding};

/// Temporal stride used when cnn3d is requested without one.
pub const DEFAULT_STRIDE: usize = 6;

pub const N_TARGETS: usize = 13;
pub const DROPOUT_RATE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Fcn,
    Cnn2d,
    Cnn3d,
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Fcn => "fcn",
            Arch::Cnn2d => "cnn2d",
            Arch::Cnn3d => "cnn3d",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fcn" => Ok(Arch::Fcn),
            "cnn2d" => Ok(Arch::Cnn2d),
            "cnn3d" => Ok(Arch::Cnn3d),
            _ => Err(Error::Usage(format!(
                "unknown model {s:?} (expected fcn, cnn2d or cnn3d)"
            ))),
        }
    }
}

/// How the 3D network sees its temporal context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalMode {
    /// Five frames taken `s` apart; the first conv collapses them with temporal stride 1.
    Sampled,
    /// All `4s + 1` consecutive frames; the first conv uses temporal stride `s`.
    FullWindow,
}

impl fmt::Display for TemporalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemporalMode::Sampled => "sampled",
            TemporalMode::FullWindow => "full_window",
        })
    }
}

impl FromStr for TemporalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(TemporalMode::Sampled),
            "full_window" => Ok(TemporalMode::FullWindow),
            _ => Err(Error::Usage(format!(
                "unknown temporal mode {s:?} (expected sampled or full_window)"
            ))),
        }
    }
}

/// Full-size networks take 128x64 frames; tiny variants take 32x16 frames with
/// two small conv layers so tests and desk-scale experiments run quickly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Full,
    Tiny,
}

impl Scale {
    pub fn frame_dims(self) -> (usize, usize) {
        match self {
            Scale::Full => (128, 64),
            Scale::Tiny => (32, 16),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Conv(ConvConfig),
    Dropout {
        rate: f64,
    },
    MaxPool {
        pool: [usize; 3],
    },
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv(_) => "conv3d",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::MaxPool { .. } => "maxpool3d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub scale: Scale,
    /// `(T, H, W, C)` of one example.
    pub input_shape: [usize; 4],
    pub temporal_mode: Option<TemporalMode>,
    pub stride: Option<usize>,
    pub layers: Vec<LayerSpec>,
}

/// One row of the per-layer audit table.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSummary {
    pub index: usize,
    pub spec: LayerSpec,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

fn conv(filters: usize, kernel: [usize; 3], strides: [usize; 3]) -> LayerSpec {
    LayerSpec::Conv(ConvConfig {
        filters,
        kernel,
        strides,
        padding: [Padding::Valid, Padding::Same, Padding::Same],
        activation: Activation::Swish,
    })
}

fn dropout() -> LayerSpec {
    LayerSpec::Dropout { rate: DROPOUT_RATE }
}

fn dense(units: usize) -> LayerSpec {
    LayerSpec::Dense {
        units,
        activation: Activation::Swish,
    }
}

fn output() -> LayerSpec {
    LayerSpec::Dense {
        units: N_TARGETS,
        activation: Activation::Linear,
    }
}

/// Conv stack shared by the 2D and 3D networks; only the first layer and the
/// uppermost filter count differ.
fn conv_stack(scale: Scale, first: LayerSpec, top_filters: usize) -> Vec<LayerSpec> {
    let pool = LayerSpec::MaxPool { pool: [1, 2, 2] };
    match scale {
        Scale::Full => vec![
            first,
            dropout(),
            conv(60, [1, 13, 13], [1, 2, 2]),
            dropout(),
            pool.clone(),
            conv(90, [1, 13, 13], [1, 2, 1]),
            dropout(),
            conv(top_filters, [1, 13, 13], [1, 2, 2]),
            dropout(),
            pool,
            LayerSpec::Flatten,
            dense(500),
            dropout(),
            output(),
        ],
        Scale::Tiny => vec![
            first,
            dropout(),
            conv(top_filters, [1, 3, 3], [1, 2, 2]),
            dropout(),
            pool,
            LayerSpec::Flatten,
            dense(64),
            dropout(),
            output(),
        ],
    }
}

impl ModelSpec {
    pub fn fcn(scale: Scale) -> Self {
        let (h, w) = scale.frame_dims();
        let (hidden, width) = match scale {
            Scale::Full => (5, 350),
            Scale::Tiny => (2, 40),
        };
        let mut layers = vec![LayerSpec::Flatten];
        for _ in 0..hidden {
            layers.push(dense(width));
            layers.push(dropout());
        }
        layers.push(output());
        Self {
            arch: Arch::Fcn,
            scale,
            input_shape: [1, h, w, 1],
            temporal_mode: None,
            stride: None,
            layers,
        }
    }

    pub fn cnn2d(scale: Scale) -> Self {
        let (h, w) = scale.frame_dims();
        let (first, top) = match scale {
            Scale::Full => (conv(30, [1, 13, 13], [1, 2, 2]), 120),
            Scale::Tiny => (conv(16, [1, 3, 3], [1, 2, 2]), 32),
        };
        Self {
            arch: Arch::Cnn2d,
            scale,
            input_shape: [1, h, w, 1],
            temporal_mode: None,
            stride: None,
            layers: conv_stack(scale, first, top),
        }
    }

    pub fn cnn3d(scale: Scale, stride: usize, mode: TemporalMode) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Usage("temporal stride s must be >= 1".into()));
        }
        let (h, w) = scale.frame_dims();
        let (frames, temporal_stride) = match mode {
            TemporalMode::Sampled => (5, 1),
            TemporalMode::FullWindow => (4 * stride + 1, stride),
        };
        let (first, top) = match scale {
            Scale::Full => (conv(30, [5, 13, 13], [temporal_stride, 2, 2]), 85),
            Scale::Tiny => (conv(16, [5, 3, 3], [temporal_stride, 2, 2]), 32),
        };
        Ok(Self {
            arch: Arch::Cnn3d,
            scale,
            input_shape: [frames, h, w, 1],
            temporal_mode: Some(mode),
            stride: Some(stride),
            layers: conv_stack(scale, first, top),
        })
    }

    /// Builds the spec for `arch`; `stride` and `mode` are only meaningful for cnn3d.
    pub fn for_arch(
        arch: Arch,
        scale: Scale,
        stride: Option<usize>,
        mode: Option<TemporalMode>,
    ) -> Result<Self> {
        match arch {
            Arch::Fcn | Arch::Cnn2d if stride.is_some() || mode.is_some() => Err(Error::Usage(
                format!("--s / --mode only apply to cnn3d, not {arch}"),
            )),
            Arch::Fcn => Ok(Self::fcn(scale)),
            Arch::Cnn2d => Ok(Self::cnn2d(scale)),
            Arch::Cnn3d => Self::cnn3d(
                scale,
                stride.unwrap_or(DEFAULT_STRIDE),
                mode.unwrap_or(TemporalMode::Sampled),
            ),
        }
    }

    /// Number of frames per example.
    pub fn frames(&self) -> usize {
        self.input_shape[0]
    }

    /// Propagates shapes through the layer list and counts parameters.
    pub fn summarize(&self) -> Result<Vec<LayerSummary>> {
        let mut shape: Vec<usize> = self.input_shape.to_vec();
        let mut rows = Vec::with_capacity(self.layers.len());
        for (index, layer) in self.layers.iter().enumerate() {
            let params = match layer {
                LayerSpec::Conv(c) => {
                    if shape.len() != 4 {
                        return Err(Error::dim("conv after flatten", &shape, &c.kernel));
                    }
                    let [t, h, w] = c.output_dims([shape[0], shape[1], shape[2]])?;
                    let params = c.param_count(shape[3]);
                    shape = vec![t, h, w, c.filters];
                    params
                }
                LayerSpec::MaxPool { pool } => {
                    if shape.len() != 4 {
                        return Err(Error::dim("maxpool after flatten", &shape, pool));
                    }
                    let mut next = shape.clone();
                    for ax in 0..3 {
                        next[ax] = shape[ax] / pool[ax];
                    }
                    if next[..3].contains(&0) {
                        return Err(Error::dim("maxpool", &shape, pool));
                    }
                    shape = next;
                    0
                }
                LayerSpec::Flatten => {
                    shape = vec![shape.iter().product()];
                    0
                }
                LayerSpec::Dense { units, .. } => {
                    if shape.len() != 1 {
                        return Err(Error::dim("dense before flatten", &shape, &[*units]));
                    }
                    let params = shape[0] * units + units;
                    shape = vec![*units];
                    params
                }
                LayerSpec::Dropout { .. } => 0,
            };
            rows.push(LayerSummary {
                index,
                spec: layer.clone(),
                output_shape: shape.clone(),
                params,
            });
        }
        if shape != [N_TARGETS] {
            return Err(Error::dim("model output", &shape, &[N_TARGETS]));
        }
        Ok(rows)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.summarize()?.iter().map(|r| r.params).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent layer-wise count: fan_in * fan_out + fan_out per weighted layer.
    fn dense_count(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn conv_count(kernel: usize, chans: &[usize]) -> usize {
        chans.windows(2).map(|c| kernel * c[0] * c[1] + c[1]).sum()
    }

    #[test]
    fn fcn_count() {
        let oracle = dense_count(&[8192, 350, 350, 350, 350, 350, 13]);
        assert_eq!(oracle, 3_363_513);
        assert_eq!(ModelSpec::fcn(Scale::Full).param_count().unwrap(), oracle);
    }

    #[test]
    fn cnn2d_count_and_flatten_width() {
        let oracle = conv_count(169, &[1, 30, 60, 90, 120]) + dense_count(&[480, 500, 13]);
        assert_eq!(oracle, 3_294_383);
        let spec = ModelSpec::cnn2d(Scale::Full);
        assert_eq!(spec.param_count().unwrap(), oracle);
        let rows = spec.summarize().unwrap();
        let traced: Vec<Vec<usize>> = rows.iter().map(|r| r.output_shape.clone()).collect();
        assert_eq!(traced[0], vec![1, 64, 32, 30]);
        assert_eq!(traced[2], vec![1, 32, 16, 60]);
        assert_eq!(traced[4], vec![1, 16, 8, 60]);
        assert_eq!(traced[5], vec![1, 8, 8, 90]);
        assert_eq!(traced[7], vec![1, 4, 4, 120]);
        assert_eq!(traced[9], vec![1, 2, 2, 120]);
        assert_eq!(traced[10], vec![480]);
    }

    #[test]
    fn cnn3d_counts() {
        let sampled_oracle =
            (5 * 169 * 30 + 30) + conv_count(169, &[30, 60, 90, 85]) + dense_count(&[340, 500, 13]);
        assert_eq!(sampled_oracle, 2_712_278);
        for s in 1..=8 {
            let spec = ModelSpec::cnn3d(Scale::Full, s, TemporalMode::Sampled).unwrap();
            assert_eq!(spec.frames(), 5);
            assert_eq!(spec.param_count().unwrap(), sampled_oracle);
        }

        let full = ModelSpec::cnn3d(Scale::Full, 6, TemporalMode::FullWindow).unwrap();
        assert_eq!(full.frames(), 25);
        let rows = full.summarize().unwrap();
        assert_eq!(rows[0].output_shape, vec![4, 64, 32, 30]);
        let full_oracle = sampled_oracle - dense_count(&[340, 500]) + dense_count(&[1360, 500]);
        assert_eq!(full_oracle, 3_222_278);
        assert_eq!(full.param_count().unwrap(), full_oracle);
    }

    #[test]
    fn full_window_count_depends_on_s_only_through_flatten() {
        for s in 1..=10 {
            let spec = ModelSpec::cnn3d(Scale::Full, s, TemporalMode::FullWindow).unwrap();
            let rows = spec.summarize().unwrap();
            let t_out = (4 * s + 1 - 5) / s + 1;
            let flatten = rows.iter().find(|r| r.spec == LayerSpec::Flatten).unwrap();
            assert_eq!(flatten.output_shape, vec![t_out * 2 * 2 * 85]);
            let expect = 2_712_278 - 340 * 500 + t_out * 340 * 500;
            assert_eq!(spec.param_count().unwrap(), expect);
        }
    }

    #[test]
    fn default_builds_near_three_million() {
        for spec in [
            ModelSpec::fcn(Scale::Full),
            ModelSpec::cnn2d(Scale::Full),
            ModelSpec::cnn3d(Scale::Full, 6, TemporalMode::Sampled).unwrap(),
        ] {
            let n = spec.param_count().unwrap();
            assert!((2_700_000..=3_400_000).contains(&n), "{n}");
        }
    }

    #[test]
    fn cnn2d_third_conv_keeps_asymmetric_stride() {
        let spec = ModelSpec::cnn2d(Scale::Full);
        match &spec.layers[5] {
            LayerSpec::Conv(c) => assert_eq!(c.strides, [1, 2, 1]),
            other => panic!("unexpected layer {other:?}"),
        }
    }

    #[test]
    fn tiny_variants_share_layer_type_sequence() {
        let kinds = |s: &ModelSpec| s.layers.iter().map(LayerSpec::kind).collect::<Vec<_>>();
        let tiny2 = ModelSpec::cnn2d(Scale::Tiny);
        let tiny3 = ModelSpec::cnn3d(Scale::Tiny, 2, TemporalMode::Sampled).unwrap();
        assert_eq!(kinds(&tiny2), kinds(&tiny3));
        assert_eq!(tiny2.summarize().unwrap()[5].output_shape, vec![4 * 2 * 32]);
        assert!(tiny3.param_count().unwrap() > 0);
        assert!(ModelSpec::fcn(Scale::Tiny).param_count().unwrap() > 0);
    }

    #[test]
    fn stride_for_non_temporal_model_is_usage_error() {
        assert!(matches!(
            ModelSpec::for_arch(Arch::Fcn, Scale::Full, Some(2), None),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            ModelSpec::cnn3d(Scale::Full, 0, TemporalMode::Sampled),
            Err(Error::Usage(_))
        ));
    }
}
