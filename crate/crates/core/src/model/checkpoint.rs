//! Binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic      6 bytes   "WLMSC1"
//! header     u32 length + UTF-8 JSON
//! tensors    f32 values, declaration order, no separators
//! ```
//!
//! Model checkpoints carry a [`ModelConfig`] header. Optimizer state is
//! written to a sibling file with the same layout whose header is a
//! [`TrainState`] and whose payload is the first- then second-moment
//! tensors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::optim::AdamState;
use super::params::{layout, ModelParams};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const MAGIC: &[u8; 6] = b"WLMSC1";

fn encode(header: &[u8], tensors: &[&[Vec<f32>]]) -> Vec<u8> {
    let floats: usize = tensors.iter().flat_map(|t| t.iter()).map(Vec::len).sum();
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header.len() + 4 * floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    for group in tensors {
        for t in group.iter() {
            for x in t {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

fn decode(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let len_at = MAGIC.len();
    let len = u32::from_le_bytes(bytes[len_at..len_at + 4].try_into().unwrap()) as usize;
    let body = len_at + 4;
    if bytes.len() < body + len {
        return Err(Error::Checkpoint("truncated header".into()));
    }
    Ok((&bytes[body..body + len], &bytes[body + len..]))
}

fn read_tensors(mut payload: &[u8], config: &ModelConfig, groups: usize) -> Result<Vec<Vec<Vec<f32>>>> {
    let specs = layout(config);
    let mut out = Vec::with_capacity(groups);
    for _ in 0..groups {
        let mut tensors = Vec::with_capacity(specs.len());
        for spec in &specs {
            let n = spec.numel() * 4;
            if payload.len() < n {
                return Err(Error::Checkpoint(format!("truncated tensor {}", spec.name)));
            }
            let (head, rest) = payload.split_at(n);
            tensors.push(
                head.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
            payload = rest;
        }
        out.push(tensors);
    }
    if !payload.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", payload.len())));
    }
    Ok(out)
}

pub fn to_bytes(params: &ModelParams<f32>) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&params.config)?;
    Ok(encode(&header, &[params.tensors()]))
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams<f32>> {
    let (header, payload) = decode(bytes)?;
    let config: ModelConfig = serde_json::from_slice(header)?;
    config.validate()?;
    let tensors = read_tensors(payload, &config, 1)?.pop().unwrap_or_default();
    ModelParams::from_tensors(&config, tensors)
}

pub fn save(params: &ModelParams<f32>, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(params)?)
}

pub fn load(path: &Path) -> Result<ModelParams<f32>> {
    from_bytes(&fs::read(path)?)
}

/// Training progress stored next to a model checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub config: ModelConfig,
    pub step: usize,
}

pub fn optimizer_path(model_path: &Path) -> PathBuf {
    let mut s = model_path.as_os_str().to_owned();
    s.push(".opt");
    PathBuf::from(s)
}

pub fn save_optimizer(state: &AdamState<f32>, config: &ModelConfig, path: &Path) -> Result<()> {
    let header = serde_json::to_vec(&TrainState {
        config: config.clone(),
        step: state.step,
    })?;
    write_atomic(path, &encode(&header, &[state.m.tensors(), state.v.tensors()]))
}

pub fn load_optimizer(path: &Path) -> Result<AdamState<f32>> {
    let bytes = fs::read(path)?;
    let (header, payload) = decode(&bytes)?;
    let ts: TrainState = serde_json::from_slice(header)?;
    let mut groups = read_tensors(payload, &ts.config, 2)?;
    let v = groups.pop().unwrap_or_default();
    let m = groups.pop().unwrap_or_default();
    Ok(AdamState {
        step: ts.step,
        m: ModelParams::from_tensors(&ts.config, m)?,
        v: ModelParams::from_tensors(&ts.config, v)?,
    })
}

/// Writes a loss curve as CSV.
pub fn write_curve<W: Write>(mut w: W, curve: &[super::train::CurvePoint]) -> Result<()> {
    writeln!(w, "step,loss,token_acc,op_acc")?;
    for p in curve {
        writeln!(w, "{},{:.6},{:.6},{:.6}", p.step, p.loss, p.token_acc, p.op_acc)?;
    }
    Ok(())
}
