//! Binary sequence container.
//!
//! ```text
//! "UDS1" | u32 version | u32 N | u32 H | u32 W | f32 fps | u16 id_len | id (UTF-8)
//! N*H*W f32 frames | N*13 f32 targets
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use crate::binio::{put_f32s, put_u16, put_u32, ByteReader};
use crate::error::{Error, FormatError, Result};
use crate::model::N_TARGETS;
use crate::tensor::Tensor;

pub const CONTAINER_MAGIC: [u8; 4] = *b"UDS1";
pub const CONTAINER_VERSION: u32 = 1;

/// Raw frames with per-frame targets aligned 1:1.
#[derive(Debug, Clone, PartialEq)]
pub struct UltrasoundSequence {
    pub id: String,
    /// `[N, H, W, 1]` echo intensities.
    pub frames: Tensor<f32>,
    /// `[N, 13]` speech parameters.
    pub targets: Tensor<f32>,
    pub fps: f32,
}

impl UltrasoundSequence {
    pub fn new(
        id: impl Into<String>,
        frames: Tensor<f32>,
        targets: Tensor<f32>,
        fps: f32,
    ) -> Result<Self> {
        let fs = frames.shape();
        if fs.len() != 4 || fs[3] != 1 {
            return Err(Error::Data(format!(
                "frames must be [N, H, W, 1], got {fs:?}"
            )));
        }
        if targets.shape() != [fs[0], N_TARGETS] {
            return Err(Error::dim(
                "sequence targets",
                targets.shape(),
                &[fs[0], N_TARGETS],
            ));
        }
        if !frames.all_finite() || !targets.all_finite() || !fps.is_finite() {
            return Err(Error::Data("sequence contains non-finite values".into()));
        }
        let id = id.into();
        if id.len() > u16::MAX as usize {
            return Err(Error::Data(format!(
                "sequence id longer than {} bytes",
                u16::MAX
            )));
        }
        Ok(Self {
            id,
            frames,
            targets,
            fps,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(H, W)` of one frame.
    pub fn frame_dims(&self) -> (usize, usize) {
        (self.frames.shape()[1], self.frames.shape()[2])
    }
}

pub fn encode_container(seq: &UltrasoundSequence) -> Vec<u8> {
    let (h, w) = seq.frame_dims();
    let mut out =
        Vec::with_capacity(32 + seq.id.len() + 4 * (seq.frames.len() + seq.targets.len()));
    out.extend_from_slice(&CONTAINER_MAGIC);
    put_u32(&mut out, CONTAINER_VERSION);
    put_u32(&mut out, seq.len() as u32);
    put_u32(&mut out, h as u32);
    put_u32(&mut out, w as u32);
    out.extend_from_slice(&seq.fps.to_le_bytes());
    put_u16(&mut out, seq.id.len() as u16);
    out.extend_from_slice(seq.id.as_bytes());
    put_f32s(&mut out, seq.frames.data().iter().copied());
    put_f32s(&mut out, seq.targets.data().iter().copied());
    out
}

pub fn decode_container(bytes: &[u8]) -> Result<UltrasoundSequence> {
    let mut r = ByteReader::new(bytes);
    r.magic(&CONTAINER_MAGIC)?;
    let version_at = r.offset();
    let version = r.u32()?;
    if version != CONTAINER_VERSION {
        return Err(Error::Format {
            offset: version_at,
            kind: FormatError::Version {
                found: version,
                expected: CONTAINER_VERSION,
            },
        });
    }
    let n_at = r.offset();
    let n = r.u32()? as usize;
    if n == 0 {
        return Err(Error::Format {
            offset: n_at,
            kind: FormatError::EmptySequence,
        });
    }
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    if h == 0 || w == 0 {
        return Err(r.fail(FormatError::Header(format!("frame size {h}x{w}"))));
    }
    let fps_at = r.offset();
    let fps = r.f32()?;
    if !fps.is_finite() {
        return Err(Error::Format {
            offset: fps_at,
            kind: FormatError::NonFinite,
        });
    }
    let id_len = r.u16()? as usize;
    let id_at = r.offset();
    let id = std::str::from_utf8(r.take(id_len)?)
        .map_err(|e| Error::Format {
            offset: id_at,
            kind: FormatError::Header(format!("sequence id is not UTF-8: {e}")),
        })?
        .to_owned();
    let n_pixels = n
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| r.fail(FormatError::Header(format!("{n}x{h}x{w} overflows"))))?;
    let frames = r.f32_vec(n_pixels)?;
    let targets = r.f32_vec(n * N_TARGETS)?;
    if r.remaining() != 0 {
        return Err(r.fail(FormatError::Header(format!(
            "{} trailing bytes",
            r.remaining()
        ))));
    }
    Ok(UltrasoundSequence {
        id,
        frames: Tensor::new(vec![n, h, w, 1], frames)?,
        targets: Tensor::new(vec![n, N_TARGETS], targets)?,
        fps,
    })
}

pub fn save_container(seq: &UltrasoundSequence, path: &Path) -> Result<()> {
    fs::write(path, encode_container(seq)).map_err(|e| Error::io(path, e))
}

pub fn load_container(path: &Path) -> Result<UltrasoundSequence> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_container(&bytes)
}
