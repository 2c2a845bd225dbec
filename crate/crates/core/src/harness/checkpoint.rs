use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::optim::OptimizerState;
use super::train::{StepRecord, TrainConfig};
use super::HarnessError;
use crate::autodiff::ParamSet;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "dlc-checkpoint";

/// Complete trainer state: resuming from it continues the run exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub params: ParamSet,
    pub optimizer: OptimizerState,
    /// Completed epochs.
    pub epoch: usize,
    /// Datapoints of the current epoch already consumed.
    pub cursor: usize,
    /// Shuffle order of the current epoch (empty at an epoch boundary).
    pub order: Vec<usize>,
    pub shuffle_rng: ChaCha8Rng,
    pub sampler_rng: ChaCha8Rng,
    pub history: Vec<StepRecord>,
}

impl Checkpoint {
    /// Header line, checksum line, then the JSON body.
    pub fn to_bytes(&self) -> Result<Vec<u8>, HarnessError> {
        let body = serde_json::to_vec(self).map_err(|e| HarnessError::Corrupt(format!("serialize: {e}")))?;
        let digest = hex(&Sha256::digest(&body));
        let mut out = format!("{MAGIC} {}\nsha256 {digest}\n", self.version).into_bytes();
        out.extend_from_slice(&body);
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HarnessError> {
        let corrupt = |m: &str| HarnessError::Corrupt(m.to_string());
        let mut parts = bytes.splitn(3, |&b| b == b'\n');
        let header = std::str::from_utf8(parts.next().unwrap_or_default()).map_err(|_| corrupt("header is not text"))?;
        let version = header
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| corrupt("missing checkpoint header"))?;
        if version != CHECKPOINT_VERSION {
            return Err(HarnessError::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        let sum = parts
            .next()
            .and_then(|l| std::str::from_utf8(l).ok())
            .and_then(|l| l.strip_prefix("sha256 "))
            .ok_or_else(|| corrupt("missing checksum line"))?
            .to_string();
        let body = parts.next().ok_or_else(|| corrupt("missing body"))?;
        let body = body.strip_suffix(b"\n").ok_or_else(|| corrupt("truncated body"))?;
        if hex(&Sha256::digest(body)) != sum {
            return Err(corrupt("checksum mismatch"));
        }
        let ckpt: Checkpoint = serde_json::from_slice(body).map_err(|e| HarnessError::Corrupt(format!("body: {e}")))?;
        if ckpt.version != version {
            return Err(corrupt("header and body versions differ"));
        }
        Ok(ckpt)
    }

    /// Serialized weights and optimizer moments only; equal bytes mean the
    /// two runs produced bit-identical models.
    pub fn weights_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&(&self.params, &self.optimizer)).expect("finite weights serialize")
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary file and renames, so readers never see a
/// partial checkpoint.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), HarnessError> {
    let bytes = ckpt.to_bytes()?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, &bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, HarnessError> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
