//! Versioned binary checkpoints.
//!
//! Layout (little endian):
//!
//! ```text
//! magic    8 bytes  "UDRVCKPT"
//! version  u32
//! meta_len u32, meta: JSON (hyperparameters, scenario, step, provenance)
//! input    u32
//! hidden   u32
//! params   f32 * param_count, tensors in PolicyNet::tensors order
//! digest   32 bytes SHA-256 of everything above
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PolicyNet, PpoHyperParams};
use crate::error::{Error, Result};
use crate::observation::Scenario;

const MAGIC: &[u8; 8] = b"UDRVCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub scenario: Scenario,
    pub global_step: u64,
    pub hyper: PpoHyperParams,
    /// Training episode whose end the snapshot was taken at.
    pub episode: Option<u64>,
    /// Undiscounted reward of that episode.
    pub episode_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: PolicyNet<f32>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta).map_err(|e| Error::Malformed { what: "checkpoint meta", detail: e.to_string() })?;
        let mut out = Vec::with_capacity(64 + meta.len() + 4 * self.params.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.params.input_len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.hidden_len() as u32).to_le_bytes());
        for t in self.params.tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |detail: &str| Error::Malformed { what: "checkpoint", detail: detail.to_string() };
        if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("missing magic"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("digest mismatch"));
        }
        let mut cur = Cursor { buf: body, pos: MAGIC.len() };
        let version = cur.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let meta_len = cur.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(cur.take(meta_len)?).map_err(|e| bad(&e.to_string()))?;
        let input = cur.u32()? as usize;
        let hidden = cur.u32()? as usize;
        let mut params = PolicyNet::<f32>::zeros(input, hidden);
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = f32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes"));
            }
        }
        if cur.pos != body.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Checkpoint { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or(Error::Malformed {
            what: "checkpoint",
            detail: "truncated".into(),
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        Checkpoint {
            meta: CheckpointMeta {
                scenario: Scenario::INFORMED,
                global_step: 12345,
                hyper: PpoHyperParams::default(),
                episode: Some(7),
                episode_reward: Some(612.5),
            },
            params: PolicyNet::init(110, 8, &mut rng),
        }
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = sample().to_bytes().unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(Checkpoint::from_bytes(&bytes).is_err());
        assert!(Checkpoint::from_bytes(b"nonsense").is_err());
    }
}
