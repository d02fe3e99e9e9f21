//! Flat binary checkpoints: magic, little-endian u64 header length, a JSON
//! header listing `{name, shape, offset}` per tensor, then raw f64 LE data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"RCDPARAM";

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<Entry>,
}

/// Parameters plus free-form metadata (typically the model configuration).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f64>,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::with_capacity(self.params.len());
        let mut offset = 0;
        for (name, t) in self.params.iter() {
            tensors.push(Entry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
            });
            offset += 8 * t.numel();
        }
        let header = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
            tensors,
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in self.params.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a parameter checkpoint"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..body]).map_err(|e| bad(&format!("bad header: {e}")))?;
        let data = &bytes[body..];
        let mut params = ModelParams::new();
        let mut end = 0;
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let stop = e
                .offset
                .checked_add(8 * n)
                .filter(|&s| s <= data.len())
                .ok_or_else(|| bad(&format!("tensor `{}` runs past the end of the file", e.name)))?;
            let vals = data[e.offset..stop]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if params.contains(&e.name) {
                return Err(bad(&format!("duplicate tensor `{}`", e.name)));
            }
            params.insert(e.name, Tensor::new(e.shape, vals)?);
            end = end.max(stop);
        }
        if end != data.len() {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(Self {
            params,
            meta: header.meta,
        })
    }

    /// Fails unless names and shapes agree exactly with `expected`.
    pub fn check_compatible(&self, expected: &ModelParams<f64>) -> Result<()> {
        check_compatible(&self.params, expected)
    }
}

/// Fails unless `have` holds exactly the names and shapes of `expected`.
pub fn check_compatible(have: &ModelParams<f64>, expected: &ModelParams<f64>) -> Result<()> {
    for (name, t) in expected.iter() {
        match have.get(name) {
            None => return Err(Error::Checkpoint(format!("missing tensor `{name}`"))),
            Some(h) if h.shape() != t.shape() => {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    h.shape(),
                    t.shape()
                )))
            }
            _ => {}
        }
    }
    if let Some(extra) = have.names().find(|n| !expected.contains(n)) {
        return Err(Error::Checkpoint(format!("unexpected tensor `{extra}`")));
    }
    Ok(())
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(&path, ckpt.to_bytes()?).map_err(|e| Error::io(&path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Checkpoint::from_bytes(&bytes)
}
