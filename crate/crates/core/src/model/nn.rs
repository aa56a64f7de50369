//! Forward-pass context and the building blocks shared by the encoders.

use std::collections::{BTreeMap, HashMap};

use super::params::{ParamGroup, ParamStore};
use crate::autodiff::{lit, Graph, Mat, Real, Var};
use crate::quant::{fake_quantize, QuantParams, RangeRecorder};

/// Which parameters become differentiable leaves.
#[derive(Debug, Clone, PartialEq)]
pub enum Trainable {
    None,
    All,
    Groups(Vec<ParamGroup>),
}

impl Trainable {
    fn includes(&self, name: &str) -> bool {
        match self {
            Trainable::None => false,
            Trainable::All => true,
            Trainable::Groups(gs) => gs.contains(&ParamGroup::of(name)),
        }
    }
}

/// What happens at each matmul input site.
pub enum QuantMode<'a> {
    Off,
    /// Record the activation range seen at every site.
    Calibrate(&'a mut RangeRecorder),
    /// Quantize-dequantize activations with the calibrated parameters.
    Simulate(&'a BTreeMap<String, QuantParams>),
}

/// One forward pass: the tape plus lazily bound parameters.
pub struct Ctx<'a, F: Real> {
    pub g: Graph<F>,
    params: &'a ParamStore<F>,
    bound: HashMap<String, Var>,
    trainable: Trainable,
    quant: QuantMode<'a>,
}

impl<'a, F: Real> Ctx<'a, F> {
    pub fn new(params: &'a ParamStore<F>, trainable: Trainable) -> Self {
        Self { g: Graph::new(), params, bound: HashMap::new(), trainable, quant: QuantMode::Off }
    }

    pub fn with_quant(mut self, quant: QuantMode<'a>) -> Self {
        self.quant = quant;
        self
    }

    pub fn params(&self) -> &'a ParamStore<F> {
        self.params
    }

    /// Parameter leaf, bound once per graph.
    pub fn p(&mut self, name: &str) -> Var {
        if let Some(&v) = self.bound.get(name) {
            return v;
        }
        let m = self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
            .clone();
        let v = if self.trainable.includes(name) { self.g.param(m) } else { self.g.constant(m) };
        self.bound.insert(name.to_string(), v);
        v
    }

    /// Bound parameter vars, for reading gradients after `backward`.
    pub fn bound(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.bound.iter()
    }

    pub fn input(&mut self, m: Mat<F>) -> Var {
        self.g.constant(m)
    }

    /// Matmul input site: observed during calibration, fake-quantized when simulating.
    fn site(&mut self, name: &str, x: Var) -> Var {
        match &mut self.quant {
            QuantMode::Off => x,
            QuantMode::Calibrate(rec) => {
                rec.observe(name, self.g.value(x).data.iter().map(|v| v.to_f64().unwrap()));
                x
            }
            QuantMode::Simulate(table) => match table.get(name) {
                Some(qp) => {
                    let q = self.g.value(x).map(|v| lit(fake_quantize(v.to_f64().unwrap(), qp)));
                    self.g.constant(q)
                }
                None => x,
            },
        }
    }

    /// `x · W (+ b)` with `W` stored as `{prefix}.w` (`in×out`).
    pub fn linear(&mut self, x: Var, prefix: &str) -> Var {
        let x = self.site(prefix, x);
        let w = self.p(&format!("{prefix}.w"));
        let y = self.g.matmul(x, w);
        let bname = format!("{prefix}.b");
        if self.params.contains(&bname) {
            let b = self.p(&bname);
            self.g.add_row(y, b)
        } else {
            y
        }
    }

    pub fn ln(&mut self, x: Var, prefix: &str) -> Var {
        let g = self.p(&format!("{prefix}.g"));
        let b = self.p(&format!("{prefix}.b"));
        self.g.layer_norm(x, g, b)
    }

    /// Scaled dot-product attention, heads split along columns.
    fn attend(&mut self, q: Var, k: Var, v: Var, heads: usize, causal: bool) -> Var {
        let d = self.g.shape(q).1;
        let dh = d / heads;
        let scale: F = lit(1.0 / (dh as f64).sqrt());
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = self.g.slice_cols(q, h * dh, dh);
            let kh = self.g.slice_cols(k, h * dh, dh);
            let vh = self.g.slice_cols(v, h * dh, dh);
            let s = self.g.matmul_t(qh, kh);
            let s = self.g.scale(s, scale);
            let a = self.g.softmax_rows(s, causal);
            outs.push(self.g.matmul(a, vh));
        }
        if outs.len() == 1 {
            outs[0]
        } else {
            self.g.concat_cols(&outs)
        }
    }

    /// Multi-head self-attention over the rows of `x` (no residual).
    pub fn self_attn(&mut self, x: Var, prefix: &str, heads: usize, causal: bool) -> Var {
        let d = self.g.shape(x).1;
        let qkv = self.linear(x, &format!("{prefix}.qkv"));
        let q = self.g.slice_cols(qkv, 0, d);
        let k = self.g.slice_cols(qkv, d, d);
        let v = self.g.slice_cols(qkv, 2 * d, d);
        let o = self.attend(q, k, v, heads, causal);
        self.linear(o, &format!("{prefix}.out"))
    }

    /// Multi-head attention with queries from `q_in` and keys/values from `kv_in`.
    pub fn cross_attn(&mut self, q_in: Var, kv_in: Var, prefix: &str, heads: usize) -> Var {
        let d = self.g.shape(q_in).1;
        let q = self.linear(q_in, &format!("{prefix}.q"));
        let kv = self.linear(kv_in, &format!("{prefix}.kv"));
        let k = self.g.slice_cols(kv, 0, d);
        let v = self.g.slice_cols(kv, d, d);
        let o = self.attend(q, k, v, heads, false);
        self.linear(o, &format!("{prefix}.out"))
    }

    /// Two-layer perceptron with QuickGELU (no residual).
    pub fn ffn(&mut self, x: Var, prefix: &str) -> Var {
        let h = self.linear(x, &format!("{prefix}.fc1"));
        let h = self.g.quick_gelu(h);
        self.linear(h, &format!("{prefix}.fc2"))
    }

    /// Pre-norm transformer block: `x + Attn(LN(x))`, then `+ FFN(LN(·))`.
    pub fn block(&mut self, x: Var, prefix: &str, heads: usize, causal: bool) -> Var {
        let h = self.ln(x, &format!("{prefix}.ln1"));
        let a = self.self_attn(h, &format!("{prefix}.attn"), heads, causal);
        let x = self.g.add(x, a);
        let h = self.ln(x, &format!("{prefix}.ln2"));
        let f = self.ffn(h, &format!("{prefix}.ffn"));
        self.g.add(x, f)
    }
}
