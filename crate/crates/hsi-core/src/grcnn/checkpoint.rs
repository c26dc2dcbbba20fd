//! Model checkpoint format.
//!
//! Little-endian layout: magic "GRC1", version u32, length-prefixed UTF-8
//! JSON architecture descriptor, raw float32 parameter blob in declaration
//! order, CRC32 over all preceding bytes.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{CheckpointError, Result};
use crate::grcnn::model::{GrcnnModel, ModelConfig};

const MAGIC: &[u8; 4] = b"GRC1";
const VERSION: u32 = 1;

/// Serialize the model into checkpoint bytes.
pub fn to_bytes(model: &GrcnnModel) -> Result<Vec<u8>> {
    let descriptor = serde_json::to_vec(model.config())
        .map_err(|e| CheckpointError::BadDescriptor(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
    buf.extend_from_slice(&descriptor);
    model.visit_params(&mut |slice| {
        for &v in slice {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    });
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

/// Reconstruct a model from checkpoint bytes.
pub fn from_bytes(bytes: &[u8]) -> Result<GrcnnModel> {
    if bytes.len() < 4 {
        return Err(CheckpointError::Truncated.into());
    }
    if &bytes[0..4] != MAGIC {
        return Err(CheckpointError::BadMagic.into());
    }
    if bytes.len() < 12 + 4 {
        return Err(CheckpointError::Truncated.into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version).into());
    }
    // checksum covers everything before the trailer
    let body_len = bytes.len() - 4;
    let stored_crc = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
    if crc32fast::hash(&bytes[..body_len]) != stored_crc {
        return Err(CheckpointError::CrcMismatch.into());
    }
    let desc_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if 12 + desc_len > body_len {
        return Err(CheckpointError::Truncated.into());
    }
    let config: ModelConfig = serde_json::from_slice(&bytes[12..12 + desc_len])
        .map_err(|e| CheckpointError::BadDescriptor(e.to_string()))?;
    let blob = &bytes[12 + desc_len..body_len];
    if blob.len() % 4 != 0 {
        return Err(CheckpointError::Truncated.into());
    }
    let mut model = GrcnnModel::new(config, 0)?;
    let expected = model.param_count();
    let got = blob.len() / 4;
    if got != expected {
        return Err(CheckpointError::DescriptorMismatch(format!(
            "blob holds {got} parameters, architecture needs {expected}"
        ))
        .into());
    }
    let mut cursor = 0usize;
    model.visit_params_mut(&mut |slice| {
        for v in slice {
            let raw: [u8; 4] = blob[cursor..cursor + 4].try_into().unwrap();
            *v = f32::from_le_bytes(raw) as f64;
            cursor += 4;
        }
    });
    Ok(model)
}

/// Write a checkpoint file.
pub fn save(model: &GrcnnModel, path: &Path) -> Result<()> {
    let bytes = to_bytes(model)?;
    let mut file = std::fs::File::create(path).map_err(CheckpointError::Io)?;
    file.write_all(&bytes).map_err(CheckpointError::Io)?;
    Ok(())
}

/// Read a checkpoint file.
pub fn load(path: &Path) -> Result<GrcnnModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(CheckpointError::Io)?
        .read_to_end(&mut bytes)
        .map_err(CheckpointError::Io)?;
    from_bytes(&bytes)
}
