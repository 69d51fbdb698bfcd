//! Flat binary checkpoints.
//!
//! Layout: the 8-byte magic `LSLUCKPT`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a UTF-8 JSON header, then
//! every tensor as row-major little-endian `f64` in header order.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LSLUCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorHeader>,
    meta: serde_json::Value,
}

pub fn to_bytes(params: &ModelParams, meta: &serde_json::Value) -> Vec<u8> {
    let names = ModelParams::names(&params.config);
    let header = Header {
        config: params.config.clone(),
        tensors: names
            .into_iter()
            .zip(&params.tensors)
            .map(|(name, t)| TensorHeader {
                name,
                rows: t.nrows(),
                cols: t.ncols(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let head = serde_json::to_vec(&header).expect("header serialization is infallible");
    let mut out = Vec::with_capacity(20 + head.len() + 8 * params.n_scalars());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(head.len() as u64).to_le_bytes());
    out.extend_from_slice(&head);
    for t in &params.tensors {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format("checkpoint is truncated".into()));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn from_bytes(mut bytes: &[u8]) -> Result<(ModelParams, serde_json::Value)> {
    if take(&mut bytes, 8)? != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let len = u64::from_le_bytes(take(&mut bytes, 8)?.try_into().expect("8 bytes")) as usize;
    let header: Header = serde_json::from_slice(take(&mut bytes, len)?)?;
    header.config.validate()?;
    let expected = ModelParams::shapes(&header.config);
    let names = ModelParams::names(&header.config);
    if header.tensors.len() != expected.len() {
        return Err(Error::Format(
            "tensor count does not match the model config".into(),
        ));
    }
    let mut tensors = Vec::with_capacity(expected.len());
    for ((h, shape), name) in header.tensors.iter().zip(expected).zip(names) {
        if (h.rows, h.cols) != shape || h.name != name {
            return Err(Error::Format(format!(
                "tensor {} has shape {}x{}, expected {name} {}x{}",
                h.name, h.rows, h.cols, shape.0, shape.1
            )));
        }
        let raw = take(&mut bytes, 8 * h.rows * h.cols)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Array2::from_shape_vec(shape, data).expect("length checked"));
    }
    if !bytes.is_empty() {
        return Err(Error::Format("trailing bytes after tensor data".into()));
    }
    Ok((
        ModelParams {
            config: header.config,
            tensors,
        },
        header.meta,
    ))
}

pub fn save(path: impl AsRef<Path>, params: &ModelParams, meta: &serde_json::Value) -> Result<()> {
    std::fs::write(path, to_bytes(params, meta))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(ModelParams, serde_json::Value)> {
    from_bytes(&std::fs::read(path)?)
}
