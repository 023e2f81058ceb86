//! CLAMDATA binary layout (all integers little-endian):
//!
//! ```text
//! magic "CLAMDATA" | u32 version | u64 env hash | u8 role
//! u32 obs_dim | u32 action_dim | u32 latent_dim | u32 trajectory count
//! per trajectory:
//!   u32 T | u8 flags (1 actions, 2 latents, 4 success) | u64 seed
//!   u32 tag length | tag bytes
//!   f32 observations [T * obs_dim]
//!   f32 actions [(T-1) * action_dim]           if flag 1
//!   f32 latent actions [(T-1) * latent_dim]    if flag 2
//! ```
//!
//! `FORMAT.md` next to this crate walks through a complete file in hex.

use std::path::Path;

use crate::{DataError, Dataset, Result, Role, Trajectory};

pub const DATA_MAGIC: &[u8; 8] = b"CLAMDATA";
pub const DATA_VERSION: u32 = 1;

const FLAG_ACTIONS: u8 = 1;
const FLAG_LATENTS: u8 = 2;
const FLAG_SUCCESS: u8 = 4;

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(DATA_MAGIC);
    out.extend_from_slice(&DATA_VERSION.to_le_bytes());
    out.extend_from_slice(&ds.env_hash().to_le_bytes());
    out.push(ds.role().tag());
    for v in [ds.obs_dim(), ds.action_dim(), ds.latent_dim(), ds.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for tr in ds.trajectories() {
        out.extend_from_slice(&(tr.len() as u32).to_le_bytes());
        let mut flags = 0;
        if tr.actions.is_some() {
            flags |= FLAG_ACTIONS;
        }
        if tr.latent_actions.is_some() {
            flags |= FLAG_LATENTS;
        }
        if tr.success {
            flags |= FLAG_SUCCESS;
        }
        out.push(flags);
        out.extend_from_slice(&tr.seed.to_le_bytes());
        out.extend_from_slice(&(tr.policy_kind.len() as u32).to_le_bytes());
        out.extend_from_slice(tr.policy_kind.as_bytes());
        let buffers = [Some(&tr.observations), tr.actions.as_ref(), tr.latent_actions.as_ref()];
        for buf in buffers.into_iter().flatten() {
            for x in buf {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(DataError::Truncated(self.bytes.len()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let len = n.checked_mul(4).ok_or(DataError::Truncated(self.bytes.len()))?;
        let raw = self.take(len)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() >= DATA_MAGIC.len() && &bytes[..DATA_MAGIC.len()] != DATA_MAGIC {
        return Err(DataError::BadMagic(bytes[..DATA_MAGIC.len()].to_vec()));
    }
    r.take(DATA_MAGIC.len())?;
    let version = r.u32()?;
    if version != DATA_VERSION {
        return Err(DataError::VersionMismatch {
            found: version,
            expected: DATA_VERSION,
        });
    }
    let env_hash = r.u64()?;
    let role_tag = r.u8()?;
    let role = Role::from_tag(role_tag).ok_or_else(|| DataError::Malformed(format!("unknown role tag {role_tag}")))?;
    let obs_dim = r.u32()? as usize;
    let action_dim = r.u32()? as usize;
    let latent_dim = r.u32()? as usize;
    let count = r.u32()? as usize;
    if obs_dim == 0 {
        return Err(DataError::Malformed("obs_dim is 0".into()));
    }
    let mut trajectories = Vec::new();
    for _ in 0..count {
        let t = r.u32()? as usize;
        if t < 2 {
            return Err(DataError::Malformed(format!("trajectory length {t} < 2")));
        }
        let flags = r.u8()?;
        if flags & !(FLAG_ACTIONS | FLAG_LATENTS | FLAG_SUCCESS) != 0 {
            return Err(DataError::Malformed(format!("unknown trajectory flags {flags:#04x}")));
        }
        let seed = r.u64()?;
        let tag_len = r.u32()? as usize;
        let policy_kind = String::from_utf8(r.take(tag_len)?.to_vec())
            .map_err(|_| DataError::Malformed("policy tag is not UTF-8".into()))?;
        let observations = r.f32s(t * obs_dim)?;
        let actions = if flags & FLAG_ACTIONS != 0 {
            Some(r.f32s((t - 1) * action_dim)?)
        } else {
            None
        };
        let latent_actions = if flags & FLAG_LATENTS != 0 {
            Some(r.f32s((t - 1) * latent_dim)?)
        } else {
            None
        };
        trajectories.push(Trajectory {
            obs_dim,
            observations,
            actions,
            latent_actions,
            success: flags & FLAG_SUCCESS != 0,
            seed,
            policy_kind,
        });
    }
    if r.pos != bytes.len() {
        return Err(DataError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Dataset::new(role, env_hash, obs_dim, action_dim, latent_dim, trajectories)
}

pub fn save(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_dataset(ds))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_dataset(&std::fs::read(path)?)
}
