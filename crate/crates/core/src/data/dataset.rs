//! Assembles preprocessed, windowed splits from a manifest.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, N_TARGETS};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::container::{load_container, UltrasoundSequence};
use super::manifest::{DatasetManifest, Split};
use super::preprocess::{resample_scanlines, NormalizationStats};
use super::windows::{make_windows, WindowMode, WindowedExample};

/// Anything that can hand out `(input, target)` mini-batches by example index.
pub trait ExampleSource<T: Scalar> {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-example input shape `(T, H, W, C)`.
    fn input_shape(&self) -> [usize; 4];

    /// Returns `[B, T, H, W, C]` inputs and `[B, 13]` targets.
    fn gather(&self, indices: &[usize]) -> Result<(Tensor<T>, Tensor<T>)>;
}

/// Fully materialized examples, mostly for tests and small experiments.
#[derive(Debug, Clone)]
pub struct InMemoryExamples<T> {
    inputs: Tensor<T>,
    targets: Tensor<T>,
}

impl<T: Scalar> InMemoryExamples<T> {
    pub fn new(inputs: Tensor<T>, targets: Tensor<T>) -> Result<Self> {
        if inputs.rank() != 5 || targets.shape() != [inputs.shape()[0], N_TARGETS] {
            return Err(Error::dim(
                "InMemoryExamples",
                inputs.shape(),
                targets.shape(),
            ));
        }
        Ok(Self { inputs, targets })
    }

    pub fn inputs(&self) -> &Tensor<T> {
        &self.inputs
    }

    pub fn targets(&self) -> &Tensor<T> {
        &self.targets
    }
}

impl<T: Scalar> ExampleSource<T> for InMemoryExamples<T> {
    fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    fn input_shape(&self) -> [usize; 4] {
        let s = self.inputs.shape();
        [s[1], s[2], s[3], s[4]]
    }

    fn gather(&self, indices: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
        Ok((
            self.inputs.select_rows(indices)?,
            self.targets.select_rows(indices)?,
        ))
    }
}

/// Normalized sequences of one split plus one window per frame.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub split: Split,
    pub mode: WindowMode,
    sequences: Vec<UltrasoundSequence>,
    /// `(sequence, center frame)` per example.
    index: Vec<(usize, usize)>,
}

impl PreparedSplit {
    pub fn new(split: Split, mode: WindowMode, sequences: Vec<UltrasoundSequence>) -> Result<Self> {
        let mut index = Vec::new();
        for (si, seq) in sequences.iter().enumerate() {
            if seq.is_empty() {
                return Err(Error::Usage(format!("sequence {} is empty", seq.id)));
            }
            index.extend((0..seq.len()).map(|t| (si, t)));
        }
        Ok(Self {
            split,
            mode,
            sequences,
            index,
        })
    }

    pub fn sequences(&self) -> &[UltrasoundSequence] {
        &self.sequences
    }

    /// Materialized windows in example order.
    pub fn windows(&self) -> Result<Vec<WindowedExample>> {
        let mut out = Vec::with_capacity(self.index.len());
        for seq in &self.sequences {
            out.extend(make_windows(seq, self.mode)?);
        }
        Ok(out)
    }
}

impl<T: Scalar> ExampleSource<T> for PreparedSplit {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn input_shape(&self) -> [usize; 4] {
        let (h, w) = self.sequences.first().map_or((0, 0), |s| s.frame_dims());
        [self.mode.len(), h, w, 1]
    }

    fn gather(&self, indices: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
        if indices.is_empty() {
            return Err(Error::Usage("gather: empty index list".into()));
        }
        let [t, h, w, _] = <Self as ExampleSource<T>>::input_shape(self);
        let frame = h * w;
        let mut inputs = Vec::with_capacity(indices.len() * t * frame);
        let mut targets = Vec::with_capacity(indices.len() * N_TARGETS);
        for &i in indices {
            let &(si, center) = self
                .index
                .get(i)
                .ok_or_else(|| Error::Usage(format!("example {i} out of range")))?;
            let seq = &self.sequences[si];
            for f in self.mode.indices(center, seq.len()) {
                inputs.extend(
                    seq.frames.data()[f * frame..(f + 1) * frame]
                        .iter()
                        .map(|&v| T::from_f64_lossy(v as f64)),
                );
            }
            let row = &seq.targets.data()[center * N_TARGETS..(center + 1) * N_TARGETS];
            targets.extend(row.iter().map(|&v| T::from_f64_lossy(v as f64)));
        }
        Ok((
            Tensor::new(vec![indices.len(), t, h, w, 1], inputs)?,
            Tensor::new(vec![indices.len(), N_TARGETS], targets)?,
        ))
    }
}

/// Frame geometry and windowing the model expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    pub frame_height: usize,
    pub frame_width: usize,
    pub mode: WindowMode,
}

impl PipelineConfig {
    pub fn for_spec(spec: &ModelSpec) -> Self {
        Self {
            frame_height: spec.input_shape[1],
            frame_width: spec.input_shape[2],
            mode: WindowMode::for_spec(spec),
        }
    }
}

pub fn resolve_entry(manifest_path: &Path, entry: &Path) -> PathBuf {
    if entry.is_absolute() {
        entry.to_path_buf()
    } else {
        manifest_path.parent().unwrap_or(Path::new(".")).join(entry)
    }
}

/// Loads and resamples the raw sequences of one split.
pub fn load_split(
    manifest_path: &Path,
    manifest: &DatasetManifest,
    split: Split,
    cfg: &PipelineConfig,
) -> Result<Vec<UltrasoundSequence>> {
    let mut out = Vec::new();
    for entry in manifest.paths(split) {
        let path = resolve_entry(manifest_path, entry);
        let mut seq = load_container(&path)?;
        let (h, w) = seq.frame_dims();
        if w != cfg.frame_width {
            return Err(Error::Data(format!(
                "{}: {w} scan lines per frame, model expects {}",
                path.display(),
                cfg.frame_width
            )));
        }
        if h != cfg.frame_height {
            seq.frames = resample_scanlines(&seq.frames, cfg.frame_height)?;
        }
        out.push(seq);
    }
    if out.is_empty() {
        return Err(Error::Usage(format!("manifest has no {split} sequences")));
    }
    Ok(out)
}

/// Applies train-fitted statistics to raw sequences.
pub fn normalize_split(
    split: Split,
    mode: WindowMode,
    raw: Vec<UltrasoundSequence>,
    stats: &NormalizationStats,
) -> Result<PreparedSplit> {
    let mut seqs = Vec::with_capacity(raw.len());
    for mut seq in raw {
        seq.frames = stats.pixels.apply(&seq.frames);
        seq.targets = stats.targets.apply(&seq.targets)?;
        seqs.push(seq);
    }
    PreparedSplit::new(split, mode, seqs)
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub stats: NormalizationStats,
    pub train: PreparedSplit,
    pub dev: PreparedSplit,
    pub test: PreparedSplit,
}

impl PreparedData {
    pub fn split(&self, split: Split) -> &PreparedSplit {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

/// Loads all three splits, fits statistics on train (unless `stats` is given)
/// and normalizes every split with them.
pub fn prepare(
    manifest_path: &Path,
    cfg: &PipelineConfig,
    stats: Option<NormalizationStats>,
) -> Result<PreparedData> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let [train, dev, test] = Split::ALL.map(|s| load_split(manifest_path, &manifest, s, cfg));
    let (train, dev, test) = (train?, dev?, test?);
    let mut ids = HashSet::new();
    for seq in train.iter().chain(&dev).chain(&test) {
        if !ids.insert(seq.id.clone()) {
            return Err(Error::Data(format!(
                "sequence id {} appears more than once",
                seq.id
            )));
        }
    }
    let stats = match stats {
        Some(s) => s,
        None => NormalizationStats::fit(&train)?,
    };
    Ok(PreparedData {
        train: normalize_split(Split::Train, cfg.mode, train, &stats)?,
        dev: normalize_split(Split::Dev, cfg.mode, dev, &stats)?,
        test: normalize_split(Split::Test, cfg.mode, test, &stats)?,
        stats,
    })
}

/// Prepares a single split with previously fitted statistics.
pub fn prepare_split(
    manifest_path: &Path,
    split: Split,
    cfg: &PipelineConfig,
    stats: &NormalizationStats,
) -> Result<PreparedSplit> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let raw = load_split(manifest_path, &manifest, split, cfg)?;
    normalize_split(split, cfg.mode, raw, stats)
}
