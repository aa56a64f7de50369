//! Named parameter tensors, their shapes and initialization.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{HeadKind, ModelConfig, CONTEXT_LEN, VOCAB};
use crate::autodiff::{lit, Mat, Real};
use crate::seed::stream_rng;

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    VideoEncoder,
    TextEncoder,
    PromptingModule,
    Head,
}

impl ParamGroup {
    pub fn of(name: &str) -> ParamGroup {
        match name.split('.').next() {
            Some("video") => ParamGroup::VideoEncoder,
            Some("text") => ParamGroup::TextEncoder,
            Some("prompt") => ParamGroup::PromptingModule,
            Some("head") => ParamGroup::Head,
            _ => panic!("parameter {name} has no group prefix"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Normal(f64),
    Zeros,
    Ones,
    Const(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

#[derive(Default)]
struct Specs(Vec<ParamSpec>);

impl Specs {
    fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, init: Init) {
        self.0.push(ParamSpec { name: name.into(), rows, cols, init });
    }

    fn linear(&mut self, p: &str, d_in: usize, d_out: usize, bias: bool) {
        self.add(format!("{p}.w"), d_in, d_out, Init::Normal(INIT_STD));
        if bias {
            self.add(format!("{p}.b"), 1, d_out, Init::Zeros);
        }
    }

    fn ln(&mut self, p: &str, d: usize) {
        self.add(format!("{p}.g"), 1, d, Init::Ones);
        self.add(format!("{p}.b"), 1, d, Init::Zeros);
    }

    fn self_attn(&mut self, p: &str, d: usize) {
        self.linear(&format!("{p}.qkv"), d, 3 * d, true);
        self.linear(&format!("{p}.out"), d, d, true);
    }

    fn cross_attn(&mut self, p: &str, d: usize) {
        self.linear(&format!("{p}.q"), d, d, true);
        self.linear(&format!("{p}.kv"), d, 2 * d, true);
        self.linear(&format!("{p}.out"), d, d, true);
    }

    fn ffn(&mut self, p: &str, d: usize, hidden: usize) {
        self.linear(&format!("{p}.fc1"), d, hidden, true);
        self.linear(&format!("{p}.fc2"), hidden, d, true);
    }

    fn block(&mut self, p: &str, d: usize, hidden: usize) {
        self.ln(&format!("{p}.ln1"), d);
        self.self_attn(&format!("{p}.attn"), d);
        self.ln(&format!("{p}.ln2"), d);
        self.ffn(&format!("{p}.ffn"), d, hidden);
    }
}

/// Every parameter of the model, in initialization order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let v = &cfg.video;
    let d = v.d_model;
    let mut s = Specs::default();

    s.linear("video.patch_proj", v.patch_dim(), d, false);
    s.add("video.class", 1, d, Init::Normal(INIT_STD));
    s.add("video.pos", v.n_patches() + 1, d, Init::Zeros);
    for l in 0..v.n_cct_layers {
        let p = format!("video.cct.{l}");
        s.linear(&format!("{p}.msg_fc"), d, d, true);
        s.ln(&format!("{p}.msg_ln"), d);
        s.self_attn(&format!("{p}.cfa"), d);
        s.ln(&format!("{p}.ln1"), d);
        s.self_attn(&format!("{p}.ifa"), d);
        s.ln(&format!("{p}.ln2"), d);
        s.ffn(&format!("{p}.ffn"), d, v.d_ffn);
    }
    s.ln("video.ln_post", d);
    s.linear("video.proj", d, v.d_embed, false);
    s.add("video.mit.temp", v.t_frames, v.d_embed, Init::Zeros);
    for l in 0..v.n_mit_layers {
        s.block(&format!("video.mit.{l}"), v.d_embed, v.d_mit_ffn);
    }

    let t = &cfg.text;
    s.add("text.tok", VOCAB, t.d_text, Init::Normal(INIT_STD));
    s.add("text.pos", CONTEXT_LEN, t.d_text, Init::Normal(INIT_STD));
    for l in 0..t.n_layers {
        s.block(&format!("text.layers.{l}"), t.d_text, t.d_ffn);
    }
    s.ln("text.ln_final", t.d_text);
    s.linear("text.proj", t.d_text, v.d_embed, false);
    s.add("text.logit_scale", 1, 1, Init::Const(cfg.logit_scale_init));

    for b in 0..cfg.prompt.n_blocks {
        s.cross_attn(&format!("prompt.{b}.attn"), v.d_embed);
        s.ffn(&format!("prompt.{b}.ffn"), v.d_embed, cfg.prompt.d_ffn);
    }

    if let HeadKind::Linear { width } = cfg.head {
        s.linear("head", v.d_embed, width, true);
    }
    s.0
}

pub fn count_params(cfg: &ModelConfig, group: Option<ParamGroup>) -> usize {
    param_specs(cfg)
        .iter()
        .filter(|p| group.is_none_or(|g| ParamGroup::of(&p.name) == g))
        .map(|p| p.rows * p.cols)
        .sum()
}

/// All tensors of a model by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<F> {
    tensors: BTreeMap<String, Mat<F>>,
}

impl<F: Real> ParamStore<F> {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = stream_rng(seed, "init");
        let mut tensors = BTreeMap::new();
        for spec in param_specs(cfg) {
            let n = spec.rows * spec.cols;
            let data: Vec<F> = match spec.init {
                Init::Normal(std) => {
                    let dist = Normal::new(0.0, std).expect("valid std");
                    (0..n).map(|_| lit(dist.sample(&mut rng))).collect()
                }
                Init::Zeros => vec![F::zero(); n],
                Init::Ones => vec![F::one(); n],
                Init::Const(c) => vec![lit(c); n],
            };
            tensors.insert(spec.name, Mat::from_vec(spec.rows, spec.cols, data));
        }
        Self { tensors }
    }

    pub fn from_map(tensors: BTreeMap<String, Mat<F>>) -> Self {
        Self { tensors }
    }

    pub fn get(&self, name: &str) -> Option<&Mat<F>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Mat<F>> {
        self.tensors.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, m: Mat<F>) {
        self.tensors.insert(name.into(), m);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Mat<F>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Mat<F>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn num_params(&self) -> usize {
        self.tensors.values().map(Mat::len).sum()
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore { tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect() }
    }

    /// Checks names and shapes against the config.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<(), String> {
        let specs = param_specs(cfg);
        if specs.len() != self.tensors.len() {
            return Err(format!("expected {} tensors, found {}", specs.len(), self.tensors.len()));
        }
        for s in specs {
            match self.tensors.get(&s.name) {
                None => return Err(format!("missing tensor {}", s.name)),
                Some(m) if m.shape() != (s.rows, s.cols) => {
                    return Err(format!("{}: shape {:?}, expected {:?}", s.name, m.shape(), (s.rows, s.cols)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Mat::is_finite)
    }
}
