//! Temporal context windows centered on each labeled frame.

use crate::error::{Error, Result};
use crate::model::{Arch, ModelSpec, TemporalMode, N_TARGETS};

use super::container::UltrasoundSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowMode {
    /// Only the labeled frame.
    Single,
    /// Five frames `s` apart: `t-2s, t-s, t, t+s, t+2s`.
    Sampled(usize),
    /// All `4s + 1` consecutive frames `t-2s ..= t+2s`.
    FullWindow(usize),
}

impl WindowMode {
    pub fn for_spec(spec: &ModelSpec) -> Self {
        match (spec.arch, spec.temporal_mode, spec.stride) {
            (Arch::Cnn3d, Some(TemporalMode::FullWindow), Some(s)) => WindowMode::FullWindow(s),
            (Arch::Cnn3d, _, s) => WindowMode::Sampled(s.unwrap_or(1)),
            _ => WindowMode::Single,
        }
    }

    /// Frames per example.
    pub fn len(self) -> usize {
        match self {
            WindowMode::Single => 1,
            WindowMode::Sampled(_) => 5,
            WindowMode::FullWindow(s) => 4 * s + 1,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }

    /// Distance in frames between the first and last window frame, plus one.
    pub fn span(self) -> usize {
        match self {
            WindowMode::Single => 1,
            WindowMode::Sampled(s) | WindowMode::FullWindow(s) => 4 * s + 1,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            WindowMode::Sampled(0) | WindowMode::FullWindow(0) => {
                Err(Error::Usage("temporal stride s must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Frame indices for center `t` in a sequence of `n` frames, clamped to `[0, n-1]`.
    pub fn indices(self, t: usize, n: usize) -> Vec<usize> {
        let clamp = |i: isize| i.clamp(0, n as isize - 1) as usize;
        let t = t as isize;
        match self {
            WindowMode::Single => vec![t as usize],
            WindowMode::Sampled(s) => {
                let s = s as isize;
                (-2..=2).map(|k| clamp(t + k * s)).collect()
            }
            WindowMode::FullWindow(s) => {
                let r = 2 * s as isize;
                (-r..=r).map(|d| clamp(t + d)).collect()
            }
        }
    }
}

/// One training example: frame indices into its sequence plus the label of the center frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedExample {
    pub sequence_id: String,
    pub center: usize,
    pub frame_indices: Vec<usize>,
    pub target: Vec<f32>,
}

impl WindowedExample {
    /// Gathers the window's frames into a `[T, H, W, 1]`-ordered buffer.
    pub fn input(&self, seq: &UltrasoundSequence) -> Vec<f32> {
        let (h, w) = seq.frame_dims();
        let frame = h * w;
        let mut out = Vec::with_capacity(self.frame_indices.len() * frame);
        for &i in &self.frame_indices {
            out.extend_from_slice(&seq.frames.data()[i * frame..(i + 1) * frame]);
        }
        out
    }
}

/// One example per frame; boundary windows are clamped, never dropped.
pub fn make_windows(seq: &UltrasoundSequence, mode: WindowMode) -> Result<Vec<WindowedExample>> {
    mode.validate()?;
    let n = seq.len();
    if n == 0 {
        return Err(Error::Usage(format!("sequence {} is empty", seq.id)));
    }
    Ok((0..n)
        .map(|t| WindowedExample {
            sequence_id: seq.id.clone(),
            center: t,
            frame_indices: mode.indices(t, n),
            target: seq.targets.data()[t * N_TARGETS..(t + 1) * N_TARGETS].to_vec(),
        })
        .collect())
}
