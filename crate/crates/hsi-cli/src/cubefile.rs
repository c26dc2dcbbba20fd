//! On-disk cube container.
//!
//! Little-endian layout: magic "HSC1", version u32, M u32 (rows), N u32
//! (cols), B u32 (bands), dtype tag u8 (1 = float32), 3 reserved bytes,
//! payload of M*N*B float32 values in band-major order, CRC32 trailer over
//! all preceding bytes. Writes go through a temp file + rename so readers
//! never observe partial files.

use std::io::{Read, Write};
use std::path::Path;

use hsi_core::HsiCube;

use crate::error::{CliError, Result};

const MAGIC: &[u8; 4] = b"HSC1";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 4 + 1 + 3;

/// Serialize a cube (f64 values rounded to f32).
pub fn to_bytes(cube: &HsiCube) -> Vec<u8> {
    let (rows, cols, bands) = cube.dims();
    let mut buf = Vec::with_capacity(HEADER_LEN + cube.len() * 4 + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    buf.extend_from_slice(&(bands as u32).to_le_bytes());
    buf.push(DTYPE_F32);
    buf.extend_from_slice(&[0, 0, 0]);
    for &v in cube.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

/// Parse cube bytes, validating magic, version, dtype, length, and CRC.
pub fn from_bytes(bytes: &[u8]) -> Result<HsiCube> {
    if bytes.len() < 4 {
        return Err(CliError::Truncated);
    }
    if &bytes[0..4] != MAGIC {
        return Err(CliError::BadMagic);
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(CliError::Truncated);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CliError::UnsupportedVersion(version));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let bands = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let dtype = bytes[20];
    if dtype != DTYPE_F32 {
        return Err(CliError::UnsupportedDtype(dtype));
    }
    let payload_len = rows
        .checked_mul(cols)
        .and_then(|v| v.checked_mul(bands))
        .and_then(|v| v.checked_mul(4))
        .ok_or(CliError::Truncated)?;
    if bytes.len() != HEADER_LEN + payload_len + 4 {
        return Err(CliError::Truncated);
    }
    let body_len = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
    if crc32fast::hash(&bytes[..body_len]) != stored {
        return Err(CliError::CrcMismatch);
    }
    let mut values = Vec::with_capacity(rows * cols * bands);
    for chunk in bytes[HEADER_LEN..body_len].chunks_exact(4) {
        values.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    Ok(HsiCube::from_vec(rows, cols, bands, values)?)
}

/// Read a cube file.
pub fn read_cube(path: &Path) -> Result<HsiCube> {
    let mut file = std::fs::File::open(path)
        .map_err(|_| CliError::MissingFile(path.display().to_string()))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

/// Write a cube file atomically (temp file in the same directory + rename).
pub fn write_cube(cube: &HsiCube, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(cube))
}

/// Atomic byte write used for every artifact the CLI produces.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            tempfile::NamedTempFile::new_in(d)?
        }
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_cube() -> HsiCube {
        // dyadic values survive the f64 -> f32 -> f64 payload round trip
        HsiCube::from_fn(3, 4, 2, |b, r, c| (b * 31 + r * 7 + c) as f64 / 256.0)
    }

    #[test]
    fn round_trip_is_bitwise_on_f32_payload() {
        let cube = sample_cube();
        let bytes = to_bytes(&cube);
        let back = from_bytes(&bytes).unwrap();
        // the payload is f32; the original values here are f32-exact
        assert_eq!(back, cube);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn corrupted_payload_byte_fails_crc() {
        let mut bytes = to_bytes(&sample_cube());
        let idx = HEADER_LEN + 5;
        bytes[idx] ^= 0x01;
        assert!(matches!(from_bytes(&bytes), Err(CliError::CrcMismatch)));
    }

    #[test]
    fn truncations_detected() {
        let bytes = to_bytes(&sample_cube());
        assert!(matches!(from_bytes(&bytes[..2]), Err(CliError::Truncated)));
        assert!(matches!(
            from_bytes(&bytes[..HEADER_LEN - 2]),
            Err(CliError::Truncated)
        ));
        assert!(matches!(
            from_bytes(&bytes[..bytes.len() - 1]),
            Err(CliError::Truncated)
        ));
    }

    #[test]
    fn wrong_magic_and_version_detected() {
        let mut bytes = to_bytes(&sample_cube());
        bytes[0] = b'Z';
        assert!(matches!(from_bytes(&bytes), Err(CliError::BadMagic)));
        let mut bytes = to_bytes(&sample_cube());
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            from_bytes(&bytes),
            Err(CliError::UnsupportedVersion(7))
        ));
    }

    #[test]
    fn file_round_trip_atomic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.hsc");
        let cube = sample_cube();
        write_cube(&cube, &path).unwrap();
        assert_eq!(read_cube(&path).unwrap(), cube);
        // no stray temp files
        let extra: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path() != path)
            .collect();
        assert!(extra.is_empty());
    }
}
