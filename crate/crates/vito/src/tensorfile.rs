//! Little-endian binary tensor files: magic `VITODS1\0`, u32 rank, u32
//! dims, then IEEE-754 f32 values in row-major order. Bit-exact across
//! platforms; integrity is enforced by SHA-256 checksums recorded in the
//! dataset manifest.

use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"VITODS1\0";

pub fn write_tensor(path: &Path, dims: &[usize], values: &[f32]) -> Result<()> {
    let count: usize = dims.iter().product();
    assert_eq!(count, values.len(), "dims do not match value count");
    let mut buf = Vec::with_capacity(8 + 4 + 4 * dims.len() + 4 * values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        buf.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let fail = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 12 {
        return Err(fail("truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(fail("bad magic bytes"));
    }
    let rank = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + 4 * rank {
        return Err(fail("truncated dims"));
    }
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        let off = 12 + 4 * i;
        dims.push(u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize);
    }
    let count: usize = dims.iter().product();
    let data_off = 12 + 4 * rank;
    if bytes.len() != data_off + 4 * count {
        return Err(fail("payload length does not match dims"));
    }
    let values = bytes[data_off..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims, values))
}

/// SHA-256 of a file's bytes as lowercase hex.
pub fn file_checksum(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut f, &mut hasher).map_err(|e| Error::io(path, e))?;
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
