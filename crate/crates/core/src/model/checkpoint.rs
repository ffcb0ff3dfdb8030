//! Binary checkpoints: a JSON header followed by the raw parameter vector.
//!
//! Layout: 8 magic bytes, a little-endian `u64` header length, the UTF-8 JSON
//! header, then every registered array as little-endian `f64` in registration
//! order. Parameters round-trip bit-exactly.

use super::{SgnoConfig, SgnoModel};
use crate::error::{Result, SgnoError};
use crate::util::atomic_write;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 8] = b"SGNOCKPT";

/// Version written into new checkpoints.
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArrayRecord {
    name: String,
    shape: Vec<usize>,
    /// Element offset into the data blob.
    offset: usize,
    /// Element count.
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: SgnoConfig,
    seed: u64,
    step: u64,
    arrays: Vec<ArrayRecord>,
}

impl SgnoModel {
    /// Serializes the model to `path`, replacing any existing file atomically.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let arrays = self
            .params()
            .entries()
            .map(|(name, shape, seg)| ArrayRecord {
                name: name.to_string(),
                shape: shape.to_vec(),
                offset: seg.offset,
                len: seg.len,
            })
            .collect();
        let header = Header {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config().clone(),
            seed: self.seed(),
            step: self.step,
            arrays,
        };
        let header_json = serde_json::to_vec(&header)?;

        let data = self.params().data();
        let mut bytes = Vec::with_capacity(MAGIC.len() + 8 + header_json.len() + data.len() * 8);
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&header_json);
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        atomic_write(path, &bytes)?;
        Ok(())
    }

    /// Restores a model saved by [`SgnoModel::save_checkpoint`].
    pub fn load_checkpoint(path: &Path) -> Result<SgnoModel> {
        let bytes = fs::read(path)?;
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(SgnoError::Data(format!(
                "{} is not a model checkpoint (bad magic)",
                path.display()
            )));
        }
        let mut len_buf = [0u8; 8];
        len_buf.copy_from_slice(&bytes[8..16]);
        let header_len = u64::from_le_bytes(len_buf) as usize;
        let data_start = 16 + header_len;
        if bytes.len() < data_start {
            return Err(SgnoError::Data("checkpoint header truncated".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[16..data_start])?;
        if header.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(SgnoError::Data(format!(
                "unsupported checkpoint format version {}",
                header.format_version
            )));
        }

        let mut model = SgnoModel::new(header.config, header.seed)?;
        model.step = header.step;

        let expected = model.param_len();
        let blob = &bytes[data_start..];
        if blob.len() != expected * 8 {
            return Err(SgnoError::Data(format!(
                "checkpoint data holds {} bytes, expected {}",
                blob.len(),
                expected * 8
            )));
        }
        for rec in &header.arrays {
            let seg = model.params().seg(&rec.name).map_err(|_| {
                SgnoError::Data(format!("checkpoint array {} is not registered", rec.name))
            })?;
            if seg.offset != rec.offset || seg.len != rec.len {
                return Err(SgnoError::Data(format!(
                    "checkpoint array {} layout does not match the configuration",
                    rec.name
                )));
            }
        }
        let data = model.params_mut().data_mut();
        for (i, v) in data.iter_mut().enumerate() {
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&blob[i * 8..i * 8 + 8]);
            *v = f64::from_le_bytes(buf);
        }
        Ok(model)
    }
}
