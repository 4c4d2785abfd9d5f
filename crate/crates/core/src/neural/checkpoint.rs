//! Checkpoint files: one line of JSON header, then a little-endian f32 payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ParamSet, Tensor};
use super::policy::{ArchDescriptor, PolicyNet};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "fw-ckpt-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub arch: ArchDescriptor,
    pub tensors: Vec<TensorEntry>,
    pub payload_bytes: usize,
}

pub fn encode(net: &PolicyNet<f32>) -> Vec<u8> {
    let mut tensors = Vec::with_capacity(net.params.tensors.len());
    let mut offset = 0;
    for t in &net.params.tensors {
        tensors.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset,
        });
        offset += 4 * t.len();
    }
    let header = CheckpointHeader {
        format: FORMAT_VERSION.into(),
        arch: net.desc.clone(),
        tensors,
        payload_bytes: offset,
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.reserve(offset);
    for t in &net.params.tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Header only, for inspection.
pub fn read_header(bytes: &[u8]) -> Result<(CheckpointHeader, &[u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::CorruptCheckpoint("missing header terminator".into()))?;
    let raw: serde_json::Value =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;
    let found = raw.get("format").and_then(|f| f.as_str()).unwrap_or("<none>");
    if found != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: found.into(),
            expected: FORMAT_VERSION.into(),
        });
    }
    let header: CheckpointHeader =
        serde_json::from_value(raw).map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;
    Ok((header, &bytes[nl + 1..]))
}

pub fn decode(bytes: &[u8]) -> Result<PolicyNet<f32>> {
    let (header, payload) = read_header(bytes)?;
    if payload.len() != header.payload_bytes {
        return Err(Error::CorruptCheckpoint(format!(
            "payload is {} bytes, manifest says {}",
            payload.len(),
            header.payload_bytes
        )));
    }
    let mut params = ParamSet::new();
    for e in &header.tensors {
        let len: usize = e.shape.iter().product();
        let end = e.offset + 4 * len;
        let chunk = payload
            .get(e.offset..end)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("tensor `{}` overruns payload", e.name)))?;
        let data = chunk
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.tensors.push(Tensor {
            name: e.name.clone(),
            shape: e.shape.clone(),
            data,
        });
    }
    if params.count() != header.arch.param_count() {
        return Err(Error::CorruptCheckpoint(format!(
            "{} parameters stored, architecture needs {}",
            params.count(),
            header.arch.param_count()
        )));
    }
    PolicyNet::from_params(&header.arch, params)
}

pub fn save_checkpoint(net: &PolicyNet<f32>, path: &Path) -> Result<()> {
    fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyNet<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
