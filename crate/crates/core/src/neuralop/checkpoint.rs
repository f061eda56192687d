//! Checkpoint file layout (little-endian):
//!
//! ```text
//! magic       4 bytes  "LBNC"
//! version     u32      1
//! header_len  u32
//! header      UTF-8 JSON {config, seed, normalizer}
//! n_params    u64
//! params      f64 x n_params
//! crc32       u32      over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::model::{Normalizer, OperatorConfig, SpectralOperatorModel};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LBNC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: OperatorConfig,
    seed: u64,
    normalizer: Normalizer,
}

pub fn encode_checkpoint(model: &SpectralOperatorModel) -> Result<Vec<u8>> {
    model.validate()?;
    let header = serde_json::to_vec(&Header {
        config: model.config.clone(),
        seed: model.seed,
        normalizer: model.normalizer.clone(),
    })?;
    let mut buf = Vec::with_capacity(header.len() + 8 * model.params.len() + 32);
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for p in &model.params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<SpectralOperatorModel> {
    let need = |n: usize, what: &str| -> Result<()> {
        if bytes.len() < n {
            Err(Error::Truncated(format!("checkpoint {what}: need {n} bytes, have {}", bytes.len())))
        } else {
            Ok(())
        }
    };
    need(12, "preamble")?;
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Magic {
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let pstart = 12 + hlen + 8;
    need(pstart, "header")?;
    let n = u64::from_le_bytes(bytes[12 + hlen..pstart].try_into().unwrap());
    let total = (n as u128) * 8 + pstart as u128 + 4;
    if total != bytes.len() as u128 {
        if total > bytes.len() as u128 {
            return Err(Error::Truncated(format!(
                "checkpoint declares {n} parameters but holds {} bytes",
                bytes.len()
            )));
        }
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() as u128 - total)));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum {
            what: "checkpoint".into(),
            stored,
            computed,
        });
    }
    let header: Header =
        serde_json::from_slice(&bytes[12..12 + hlen]).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let params = body[pstart..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let model = SpectralOperatorModel {
        config: header.config,
        seed: header.seed,
        normalizer: header.normalizer,
        params,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_checkpoint(model: &SpectralOperatorModel, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<SpectralOperatorModel> {
    decode_checkpoint(&fs::read(path)?)
}
