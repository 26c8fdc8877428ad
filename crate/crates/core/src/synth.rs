//! Synthetic ultrasound-like sequences whose targets depend on both the position
//! and the velocity of a latent articulator.
//!
//! Each frame shows one isotropic Gaussian blob on a noisy background. Targets
//! are a fixed random linear map of the per-sequence standardized position and
//! velocity, so a single frame cannot explain the velocity part of the label.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{save_container, DatasetManifest, Split, UltrasoundSequence};
use crate::error::{Error, Result};
use crate::model::N_TARGETS;
use crate::tensor::Tensor;

pub const LATENT_DIMS: usize = 4;
pub const MANIFEST_NAME: &str = "manifest.tsv";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub blob_sigma: f64,
    /// Moving-average window (frames) applied to the latent steps; odd.
    pub smoothing: usize,
    pub noise_std: f64,
    pub velocity_weight: f64,
    pub fps: f32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_train: 31,
            n_dev: 4,
            n_test: 9,
            frames: 200,
            height: 128,
            width: 64,
            blob_sigma: 6.0,
            smoothing: 9,
            noise_std: 0.05,
            velocity_weight: 0.5,
            fps: 82.0,
        }
    }
}

impl SynthConfig {
    /// 32x16 frames with the blob width scaled by the same factor as the image.
    pub fn tiny() -> Self {
        Self {
            height: 32,
            width: 16,
            blob_sigma: 1.5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.smoothing == 0 || self.smoothing.is_multiple_of(2) {
            return Err(Error::Usage(format!(
                "smoothing window must be odd, got {}",
                self.smoothing
            )));
        }
        if !(0.0..=1.0).contains(&self.velocity_weight) {
            return Err(Error::Usage(format!(
                "velocity_weight must be in [0, 1], got {}",
                self.velocity_weight
            )));
        }
        if self.n_train == 0 || self.n_dev == 0 || self.n_test == 0 {
            return Err(Error::Usage(
                "every split needs at least one sequence".into(),
            ));
        }
        if self.frames == 0 || self.height < 2 || self.width == 0 {
            return Err(Error::Usage(
                "frames, height and width must be positive (height >= 2)".into(),
            ));
        }
        if !(self.blob_sigma > 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::Usage(
                "blob_sigma must be > 0 and noise_std >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_dev + self.n_test
    }

    /// Split and within-split position of a global sequence index.
    pub fn split_of(&self, index: usize) -> (Split, usize) {
        if index < self.n_train {
            (Split::Train, index)
        } else if index < self.n_train + self.n_dev {
            (Split::Dev, index - self.n_train)
        } else {
            (Split::Test, index - self.n_train - self.n_dev)
        }
    }

    fn margin(&self, extent: usize) -> f64 {
        (2.0 * self.blob_sigma).min((extent - 1) as f64 / 4.0)
    }
}

/// Latent position and velocity per frame, in pixel coordinates `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub position: Vec<[f64; 2]>,
    pub velocity: Vec<[f64; 2]>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The fixed `13 x 4` mixing matrix for `seed`.
pub fn mixing_matrix(seed: u64) -> [[f64; LATENT_DIMS]; N_TARGETS] {
    let mut rng = stream_rng(seed, 0);
    let mut m = [[0.0; LATENT_DIMS]; N_TARGETS];
    for row in &mut m {
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    }
    m
}

fn latent(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> LatentTrajectory {
    let n = cfg.frames;
    let extents = [cfg.height, cfg.width];
    let mut axes = [vec![0.0; n], vec![0.0; n]];
    for (axis, values) in axes.iter_mut().enumerate() {
        let steps: Vec<f64> = (0..n + cfg.smoothing - 1)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        for (t, v) in values.iter_mut().enumerate() {
            *v = steps[t..t + cfg.smoothing].iter().sum::<f64>() / cfg.smoothing as f64;
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let margin = cfg.margin(extents[axis]);
        let (a, b) = (margin, (extents[axis] - 1) as f64 - margin);
        for v in values.iter_mut() {
            *v = if hi > lo {
                a + (*v - lo) / (hi - lo) * (b - a)
            } else {
                0.5 * (a + b)
            };
        }
    }
    let position: Vec<[f64; 2]> = (0..n).map(|t| [axes[0][t], axes[1][t]]).collect();
    let velocity = (0..n)
        .map(|t| {
            if t == 0 {
                [0.0, 0.0]
            } else {
                [
                    position[t][0] - position[t - 1][0],
                    position[t][1] - position[t - 1][1],
                ]
            }
        })
        .collect();
    LatentTrajectory { position, velocity }
}

fn standardize(values: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = values.len() as f64;
    let mut out = values.to_vec();
    for axis in 0..2 {
        let mean = values.iter().map(|v| v[axis]).sum::<f64>() / n;
        let var = values.iter().map(|v| (v[axis] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        for (o, v) in out.iter_mut().zip(values) {
            o[axis] = if std > 0.0 {
                (v[axis] - mean) / std
            } else {
                0.0
            };
        }
    }
    out
}

/// Generates sequence `index` together with its latent trajectory.
pub fn generate_with_latent(
    cfg: &SynthConfig,
    index: usize,
) -> Result<(UltrasoundSequence, LatentTrajectory)> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, index as u64 + 1);
    let traj = latent(cfg, &mut rng);
    let (h, w, n) = (cfg.height, cfg.width, cfg.frames);

    let inv = 1.0 / (2.0 * cfg.blob_sigma * cfg.blob_sigma);
    let mut frames = Vec::with_capacity(n * h * w);
    for p in &traj.position {
        for r in 0..h {
            let dr = (r as f64 - p[0]).powi(2);
            for c in 0..w {
                let dc = (c as f64 - p[1]).powi(2);
                let noise: f64 = if cfg.noise_std > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    cfg.noise_std * z
                } else {
                    0.0
                };
                frames.push(((-(dr + dc) * inv).exp() + noise) as f32);
            }
        }
    }

    let m = mixing_matrix(cfg.seed);
    let pos = standardize(&traj.position);
    let vel = standardize(&traj.velocity);
    let vw = cfg.velocity_weight;
    let mut targets = Vec::with_capacity(n * N_TARGETS);
    for t in 0..n {
        let z = [
            (1.0 - vw) * pos[t][0],
            (1.0 - vw) * pos[t][1],
            vw * vel[t][0],
            vw * vel[t][1],
        ];
        for row in &m {
            targets.push(row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() as f32);
        }
    }

    let (split, k) = cfg.split_of(index);
    let seq = UltrasoundSequence::new(
        format!("{split}_{k:03}"),
        Tensor::new(vec![n, h, w, 1], frames)?,
        Tensor::new(vec![n, N_TARGETS], targets)?,
        cfg.fps,
    )?;
    Ok((seq, traj))
}

pub fn generate_sequence(cfg: &SynthConfig, index: usize) -> Result<UltrasoundSequence> {
    generate_with_latent(cfg, index).map(|(s, _)| s)
}

pub fn container_name(cfg: &SynthConfig, index: usize) -> String {
    let (split, k) = cfg.split_of(index);
    format!("{split}_{k:03}.uds")
}

#[derive(Debug, Clone)]
pub struct CorpusSummary {
    pub manifest_path: PathBuf,
    pub manifest: DatasetManifest,
}

/// Writes one container per sequence plus `manifest.tsv` into `out_dir`.
pub fn generate_corpus(cfg: &SynthConfig, out_dir: &Path) -> Result<CorpusSummary> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    (0..cfg.total()).into_par_iter().try_for_each(|i| {
        let seq = generate_sequence(cfg, i)?;
        save_container(&seq, &out_dir.join(container_name(cfg, i)))
    })?;
    let manifest = DatasetManifest {
        entries: (0..cfg.total())
            .map(|i| (PathBuf::from(container_name(cfg, i)), cfg.split_of(i).0))
            .collect(),
    };
    let manifest_path = out_dir.join(MANIFEST_NAME);
    manifest.save(&manifest_path)?;
    Ok(CorpusSummary {
        manifest_path,
        manifest,
    })
}
