//! Model checkpoints: the architecture config plus every named tensor
//! (parameters and batch-norm running statistics) as little-endian f32.

use super::config::ViTOConfig;
use super::net::ViTO;
use crate::error::{Error, Result};
use candle_core::{DType, Device, Tensor};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"VITOCK1\0";

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn save_checkpoint(model: &ViTO, path: &Path) -> Result<()> {
    let io_err = |e: std::io::Error| Error::io(path, e);
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(MAGIC).map_err(io_err)?;
    let cfg = model.config.to_kv_string();
    write_u32(&mut w, cfg.len() as u32).map_err(io_err)?;
    w.write_all(cfg.as_bytes()).map_err(io_err)?;
    let tensors = model.store.named_tensors();
    write_u32(&mut w, tensors.len() as u32).map_err(io_err)?;
    for (name, t) in tensors {
        write_u32(&mut w, name.len() as u32).map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        let dims = t.dims();
        write_u32(&mut w, dims.len() as u32).map_err(io_err)?;
        for d in dims {
            write_u32(&mut w, *d as u32).map_err(io_err)?;
        }
        let data: Vec<f32> = t
            .to_dtype(DType::F32)?
            .flatten_all()?
            .to_vec1()?;
        let mut bytes = Vec::with_capacity(4 * data.len());
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Load a checkpoint, rebuilding the model from the stored config.
pub fn load_checkpoint(path: &Path) -> Result<ViTO> {
    let io_err = |e: std::io::Error| Error::io(path, e);
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut r = std::io::BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: String::from_utf8_lossy(&magic).into_owned(),
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
        });
    }
    let cfg_len = read_u32(&mut r).map_err(io_err)? as usize;
    let mut cfg_bytes = vec![0u8; cfg_len];
    r.read_exact(&mut cfg_bytes).map_err(io_err)?;
    let cfg_text = String::from_utf8(cfg_bytes).map_err(|_| Error::Format {
        path: path.to_path_buf(),
        reason: "config block is not valid UTF-8".into(),
    })?;
    let config = ViTOConfig::from_kv_string(&cfg_text)?;
    let model = ViTO::new(&config, 0, DType::F32)?;
    let n_tensors = read_u32(&mut r).map_err(io_err)? as usize;
    let expected = model.store.names();
    if n_tensors != expected.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!(
                "checkpoint has {n_tensors} tensors, model needs {}",
                expected.len()
            ),
        });
    }
    let dev = Device::Cpu;
    for _ in 0..n_tensors {
        let name_len = read_u32(&mut r).map_err(io_err)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(io_err)?;
        let name = String::from_utf8(name_bytes).map_err(|_| Error::Format {
            path: path.to_path_buf(),
            reason: "tensor name is not valid UTF-8".into(),
        })?;
        let rank = read_u32(&mut r).map_err(io_err)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&mut r).map_err(io_err)? as usize);
        }
        let count: usize = dims.iter().product();
        let mut bytes = vec![0u8; 4 * count];
        r.read_exact(&mut bytes).map_err(io_err)?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::from_vec(data, dims.as_slice(), &dev)?;
        model.set_tensor_checked(&name, &t, path)?;
    }
    Ok(model)
}

/// Load a checkpoint and require its config to equal `expected`.
pub fn load_checkpoint_expecting(path: &Path, expected: &ViTOConfig) -> Result<ViTO> {
    let model = load_checkpoint(path)?;
    if &model.config != expected {
        return Err(Error::InvalidConfig(format!(
            "checkpoint '{}' was written with a different model config",
            path.display()
        )));
    }
    Ok(model)
}

impl ViTO {
    fn set_tensor_checked(&self, name: &str, t: &Tensor, path: &Path) -> Result<()> {
        let existing = self.store.get(name).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            reason: format!("unknown tensor '{name}' in checkpoint"),
        })?;
        if existing.as_tensor().dims() != t.dims() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!(
                    "tensor '{name}' has shape {:?}, model expects {:?}",
                    t.dims(),
                    existing.as_tensor().dims()
                ),
            });
        }
        self.store.set_named(name, t)
    }
}
