//! `CLAMCKPT` checkpoint files.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic    8 bytes  "CLAMCKPT"
//! version  u32
//! spec     u32 byte length, then UTF-8 (JSON model description)
//! count    u32 number of tensors
//! tensor   u32 name length, name bytes, u32 rank, rank × u32 dims,
//!          product(dims) × f32 values
//! ```

use std::io::Write;
use std::path::Path;

use clam_numerics::{ParamStore, Tensor};
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CLAMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

pub fn encode_checkpoint(spec: &str, store: &ParamStore<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 4 * store.num_scalars());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(spec.as_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, name, value) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(value.rank() as u32).to_le_bytes());
        for &d in value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Truncated(self.bytes.len()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| CheckpointError::Malformed("non-UTF-8 string".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(String, ParamStore<f32>), CheckpointError> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(8)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let spec = c.string()?;
    let count = c.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name = c.string()?;
        let rank = c.u32()? as usize;
        if rank > 8 {
            return Err(CheckpointError::Malformed(format!("tensor `{name}` has rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| c.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= bytes.len() / 4)
            .ok_or(CheckpointError::Truncated(bytes.len()))?;
        let raw = c.take(numel * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let value = Tensor::new(shape, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        store
            .insert(name, value)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    }
    if c.pos != bytes.len() {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    Ok((spec, store))
}

pub fn write_checkpoint(path: &Path, spec: &str, store: &ParamStore<f32>) -> Result<(), CheckpointError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_checkpoint(spec, store))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(String, ParamStore<f32>), CheckpointError> {
    decode_checkpoint(&std::fs::read(path)?)
}
