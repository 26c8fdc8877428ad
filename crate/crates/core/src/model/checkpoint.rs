//! Model checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! "SSIM" | u32 version | u64 seed | u32 spec_len | spec (JSON, UTF-8)
//! u32 tensor_count | per tensor: u32 rank, rank x u32 dims, f32 data
//! ```
//!
//! Tensors follow [`Model::parameters`] order.

use std::fs;
use std::path::Path;

use super::network::Model;
use super::spec::ModelSpec;
use crate::binio::{put_f32s, put_u32, put_u64, ByteReader};
use crate::error::{Error, FormatError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SSIM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let spec = serde_json::to_vec(&model.spec).expect("spec serializes");
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_u64(&mut out, model.seed);
    put_u32(&mut out, spec.len() as u32);
    out.extend_from_slice(&spec);
    let params = model.parameters();
    put_u32(&mut out, params.len() as u32);
    for p in params {
        put_u32(&mut out, p.rank() as u32);
        for &d in p.shape() {
            put_u32(&mut out, d as u32);
        }
        put_f32s(&mut out, p.data().iter().map(|v| v.to_f64_lossy() as f32));
    }
    out
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Model<T>> {
    let mut r = ByteReader::new(bytes);
    r.magic(&CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            offset: 4,
            kind: FormatError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            },
        });
    }
    let seed = r.u64()?;
    let spec_len = r.u32()? as usize;
    let spec_at = r.offset();
    let spec: ModelSpec = serde_json::from_slice(r.take(spec_len)?).map_err(|e| Error::Format {
        offset: spec_at,
        kind: FormatError::Header(format!("model spec: {e}")),
    })?;
    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = r.u32()? as usize;
        if rank == 0 || rank > crate::tensor::MAX_RANK {
            return Err(r.fail(FormatError::Header(format!("tensor rank {rank}"))));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let n = n.ok_or_else(|| r.fail(FormatError::Header(format!("tensor shape {shape:?}"))))?;
        let data = r.f32_vec(n)?;
        let data = data
            .into_iter()
            .map(|v| T::from_f64_lossy(v as f64))
            .collect();
        params.push(Tensor::new(shape, data)?);
    }
    if r.remaining() != 0 {
        return Err(r.fail(FormatError::Header(format!(
            "{} trailing bytes",
            r.remaining()
        ))));
    }
    Model::from_parameters(spec, seed, params)
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
