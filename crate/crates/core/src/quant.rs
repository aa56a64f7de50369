//! Post-training INT8 quantization: symmetric per-tensor weights and
//! activations, simulated by dequantizing before the float matmul.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{EventLabel, GameId};
use crate::autodiff::{Mat, Real};
use crate::frames::ClipTensor;
use crate::model::{ModelConfig, ModelError, ParamStore, PromptCache, PromptSet, XClip};

pub const QMAX: f64 = 127.0;

#[derive(Debug, Error, PartialEq)]
pub enum QuantError {
    #[error("non-finite value in tensor {0}")]
    NonFiniteInput(String),
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: i8,
}

impl QuantParams {
    /// Symmetric parameters for a range `[-max_abs, max_abs]`; an all-zero range gets scale 1.
    pub fn from_max_abs(max_abs: f64) -> Self {
        let scale = if max_abs > 0.0 { max_abs / QMAX } else { 1.0 };
        Self { scale, zero_point: 0 }
    }

    pub fn quantize(&self, x: f64) -> i8 {
        (x / self.scale).round_ties_even().clamp(-QMAX, QMAX) as i8
    }

    pub fn dequantize(&self, q: i8) -> f64 {
        self.scale * f64::from(q)
    }
}

/// `dq(q(x))`.
pub fn fake_quantize(x: f64, qp: &QuantParams) -> f64 {
    qp.dequantize(qp.quantize(x))
}

pub fn quantize_tensor(x: &[f32]) -> Result<(Vec<i8>, QuantParams), QuantError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(QuantError::NonFiniteInput("input".into()));
    }
    let max_abs = x.iter().fold(0.0f64, |m, &v| m.max(f64::from(v).abs()));
    let qp = QuantParams::from_max_abs(max_abs);
    Ok((x.iter().map(|&v| qp.quantize(f64::from(v))).collect(), qp))
}

pub fn dequantize(q: &[i8], qp: &QuantParams) -> Vec<f32> {
    q.iter().map(|&v| qp.dequantize(v) as f32).collect()
}

/// Running min/max per activation site.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RangeRecorder {
    ranges: BTreeMap<String, (f64, f64)>,
}

impl RangeRecorder {
    pub fn observe(&mut self, site: &str, values: impl Iterator<Item = f64>) {
        let e = self.ranges.entry(site.to_string()).or_insert((f64::INFINITY, f64::NEG_INFINITY));
        for v in values {
            e.0 = e.0.min(v);
            e.1 = e.1.max(v);
        }
    }

    pub fn ranges(&self) -> &BTreeMap<String, (f64, f64)> {
        &self.ranges
    }

    pub fn to_params(&self) -> BTreeMap<String, QuantParams> {
        self.ranges
            .iter()
            .map(|(k, &(lo, hi))| {
                let m = if lo <= hi { lo.abs().max(hi.abs()) } else { 0.0 };
                (k.clone(), QuantParams::from_max_abs(m))
            })
            .collect()
    }
}

/// Runs a full forward pass per clip and derives symmetric parameters per
/// matmul input site from the observed `max|·|`.
pub fn calibrate_activations(
    model: &XClip<f32>,
    calib: &[ClipTensor],
    prompts_for: impl Fn(&ClipTensor) -> PromptSet,
) -> Result<BTreeMap<String, QuantParams>, QuantError> {
    if calib.is_empty() {
        return Err(QuantError::EmptyCalibration);
    }
    let mut rec = RangeRecorder::default();
    for clip in calib {
        model.calibrate_forward(clip, &prompts_for(clip), &mut rec)?;
    }
    Ok(rec.to_params())
}

/// Built-in prompts for the clip's game, `Unknown` when it has no provenance.
pub fn default_prompts(clip: &ClipTensor) -> PromptSet {
    PromptSet::builtin(clip.provenance.as_ref().map_or(GameId::Unknown, |c| c.game))
}

/// One quantized tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct QTensor {
    pub rows: usize,
    pub cols: usize,
    pub q: Vec<i8>,
    pub params: QuantParams,
}

impl QTensor {
    pub fn dequantize(&self) -> Mat<f32> {
        Mat::from_vec(self.rows, self.cols, dequantize(&self.q, &self.params))
    }
}

/// Model with every tensor stored as INT8 plus calibrated activation parameters.
#[derive(Debug, Clone)]
pub struct QuantizedModel {
    pub cfg: ModelConfig,
    pub weights: BTreeMap<String, QTensor>,
    pub activations: BTreeMap<String, QuantParams>,
    dequantized: XClip<f32>,
}

pub fn quantize_model(
    model: &XClip<f32>,
    calib: &[ClipTensor],
    prompts_for: impl Fn(&ClipTensor) -> PromptSet,
) -> Result<QuantizedModel, QuantError> {
    let activations = calibrate_activations(model, calib, prompts_for)?;
    let mut weights = BTreeMap::new();
    for (name, m) in model.params.iter() {
        let (q, params) = quantize_tensor(&m.data).map_err(|_| QuantError::NonFiniteInput(name.clone()))?;
        weights.insert(name.clone(), QTensor { rows: m.rows, cols: m.cols, q, params });
    }
    QuantizedModel::new(model.cfg.clone(), weights, activations)
}

impl QuantizedModel {
    pub fn new(
        cfg: ModelConfig,
        weights: BTreeMap<String, QTensor>,
        activations: BTreeMap<String, QuantParams>,
    ) -> Result<Self, QuantError> {
        let params = ParamStore::from_map(weights.iter().map(|(k, t)| (k.clone(), t.dequantize())).collect());
        let dequantized = XClip::from_params(cfg.clone(), params)?;
        Ok(Self { cfg, weights, activations, dequantized })
    }

    /// FP32 model holding the dequantized weights.
    pub fn dequantized(&self) -> &XClip<f32> {
        &self.dequantized
    }

    /// Simulated INT8 inference: dequantized weights, fake-quantized matmul inputs.
    pub fn classify(
        &self,
        clip: &ClipTensor,
        set: &PromptSet,
        cache: &PromptCache<f32>,
    ) -> Result<Vec<(EventLabel, f64)>, ModelError> {
        self.dequantized.classify_with(clip, set, cache, Some(&self.activations))
    }

    /// INT8 payload plus 8 bytes of scale per tensor.
    pub fn payload_bytes(&self) -> usize {
        self.weights.values().map(|t| t.q.len() + 8).sum()
    }
}

/// Bytes of the same tensors stored as FP32.
pub fn fp32_payload_bytes<F: Real>(params: &ParamStore<F>) -> usize {
    4 * params.num_params()
}
