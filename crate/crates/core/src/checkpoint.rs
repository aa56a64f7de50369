//! Binary checkpoint containers.
//!
//! Layout: magic, `u32` LE version, `u32` LE header length, JSON header, then
//! raw little-endian tensor data at the offsets listed in the header.
//! `XCKP1` stores `f32`; `XCKQ1` stores `i8` with a scale per tensor and the
//! calibrated activation parameters.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Mat;
use crate::model::{ModelConfig, ParamStore, XClip};
use crate::quant::{QTensor, QuantParams, QuantizedModel};

pub const MAGIC_FP32: &[u8; 5] = b"XCKP1";
pub const MAGIC_INT8: &[u8; 5] = b"XCKQ1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad magic, expected {expected}")]
    BadMagic { expected: String },
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("truncated container")]
    Truncated,
    #[error("header: {0}")]
    Header(String),
    #[error("tensor {0}: {1}")]
    Tensor(String, String),
    #[error(transparent)]
    Quant(#[from] crate::quant::QuantError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    I8,
}

impl DType {
    fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::I8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub dtype: DType,
    pub shape: [usize; 2],
    pub offset: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_point: Option<i8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub config: ModelConfig,
    pub epoch: Option<u32>,
    pub val_accuracy: Option<f64>,
    pub tensors: BTreeMap<String, TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activations: Option<BTreeMap<String, QuantParams>>,
}

/// Training metadata stored next to the weights.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Meta {
    pub epoch: Option<u32>,
    pub val_accuracy: Option<f64>,
}

fn assemble(magic: &[u8; 5], header: &Header, data: &[u8]) -> Result<Vec<u8>, CheckpointError> {
    let json = serde_json::to_vec(header).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let mut out = Vec::with_capacity(13 + json.len() + data.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(data);
    Ok(out)
}

fn split<'a>(magic: &[u8; 5], bytes: &'a [u8]) -> Result<(Header, &'a [u8]), CheckpointError> {
    if bytes.len() < 13 {
        return Err(CheckpointError::Truncated);
    }
    if &bytes[..5] != magic {
        return Err(CheckpointError::BadMagic { expected: String::from_utf8_lossy(magic).into() });
    }
    let version = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let len = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let json = bytes.get(13..13 + len).ok_or(CheckpointError::Truncated)?;
    let header: Header = serde_json::from_slice(json).map_err(|e| CheckpointError::Header(e.to_string()))?;
    Ok((header, &bytes[13 + len..]))
}

fn slice<'a>(data: &'a [u8], name: &str, e: &TensorEntry) -> Result<&'a [u8], CheckpointError> {
    let n = e.shape[0] * e.shape[1] * e.dtype.size();
    data.get(e.offset..e.offset + n)
        .ok_or_else(|| CheckpointError::Tensor(name.into(), "data out of range".into()))
}

pub fn encode_fp32(model: &XClip<f32>, meta: Meta) -> Result<Vec<u8>, CheckpointError> {
    let mut tensors = BTreeMap::new();
    let mut data = Vec::new();
    for (name, m) in model.params.iter() {
        tensors.insert(
            name.clone(),
            TensorEntry { dtype: DType::F32, shape: [m.rows, m.cols], offset: data.len(), scale: None, zero_point: None },
        );
        for v in &m.data {
            data.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        config: model.cfg.clone(),
        epoch: meta.epoch,
        val_accuracy: meta.val_accuracy,
        tensors,
        activations: None,
    };
    assemble(MAGIC_FP32, &header, &data)
}

pub fn decode_fp32(bytes: &[u8]) -> Result<(XClip<f32>, Meta), CheckpointError> {
    let (header, data) = split(MAGIC_FP32, bytes)?;
    let mut map = BTreeMap::new();
    for (name, e) in &header.tensors {
        if e.dtype != DType::F32 {
            return Err(CheckpointError::Tensor(name.clone(), "expected f32".into()));
        }
        let raw = slice(data, name, e)?;
        let vals = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        map.insert(name.clone(), Mat::from_vec(e.shape[0], e.shape[1], vals));
    }
    let model = XClip::from_params(header.config, ParamStore::from_map(map))
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    Ok((model, Meta { epoch: header.epoch, val_accuracy: header.val_accuracy }))
}

pub fn encode_int8(model: &QuantizedModel, meta: Meta) -> Result<Vec<u8>, CheckpointError> {
    let mut tensors = BTreeMap::new();
    let mut data = Vec::new();
    for (name, t) in &model.weights {
        tensors.insert(
            name.clone(),
            TensorEntry {
                dtype: DType::I8,
                shape: [t.rows, t.cols],
                offset: data.len(),
                scale: Some(t.params.scale),
                zero_point: Some(t.params.zero_point),
            },
        );
        data.extend(t.q.iter().map(|&q| q as u8));
    }
    let header = Header {
        config: model.cfg.clone(),
        epoch: meta.epoch,
        val_accuracy: meta.val_accuracy,
        tensors,
        activations: Some(model.activations.clone()),
    };
    assemble(MAGIC_INT8, &header, &data)
}

pub fn decode_int8(bytes: &[u8]) -> Result<(QuantizedModel, Meta), CheckpointError> {
    let (header, data) = split(MAGIC_INT8, bytes)?;
    let mut weights = BTreeMap::new();
    for (name, e) in &header.tensors {
        let (Some(scale), DType::I8) = (e.scale, e.dtype) else {
            return Err(CheckpointError::Tensor(name.clone(), "expected i8 with scale".into()));
        };
        if !(scale.is_finite() && scale > 0.0) {
            return Err(CheckpointError::Tensor(name.clone(), format!("invalid scale {scale}")));
        }
        let q = slice(data, name, e)?.iter().map(|&b| b as i8).collect();
        let params = QuantParams { scale, zero_point: e.zero_point.unwrap_or(0) };
        weights.insert(name.clone(), QTensor { rows: e.shape[0], cols: e.shape[1], q, params });
    }
    let meta = Meta { epoch: header.epoch, val_accuracy: header.val_accuracy };
    let model = QuantizedModel::new(header.config, weights, header.activations.unwrap_or_default())?;
    Ok((model, meta))
}

/// Byte length of the tensor data section of a container.
pub fn payload_len(bytes: &[u8]) -> Result<usize, CheckpointError> {
    if bytes.len() < 13 {
        return Err(CheckpointError::Truncated);
    }
    let len = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    bytes.len().checked_sub(13 + len).ok_or(CheckpointError::Truncated)
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.display().to_string(), source }
}

pub fn save_fp32(path: &Path, model: &XClip<f32>, meta: Meta) -> Result<(), CheckpointError> {
    fs::write(path, encode_fp32(model, meta)?).map_err(io(path))
}

pub fn load_fp32(path: &Path) -> Result<(XClip<f32>, Meta), CheckpointError> {
    decode_fp32(&fs::read(path).map_err(io(path))?)
}

pub fn save_int8(path: &Path, model: &QuantizedModel, meta: Meta) -> Result<(), CheckpointError> {
    fs::write(path, encode_int8(model, meta)?).map_err(io(path))
}

pub fn load_int8(path: &Path) -> Result<(QuantizedModel, Meta), CheckpointError> {
    decode_int8(&fs::read(path).map_err(io(path))?)
}
