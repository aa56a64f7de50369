//! Finetuning loop: cross-entropy over the class probabilities, AdamW with
//! decoupled weight decay and a per-epoch cosine learning-rate schedule.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{DatasetManifest, EventLabel, GameId, Split};
use crate::autodiff::{lit, Mat, Real};
use crate::checkpoint::{self, CheckpointError, Meta};
use crate::frames::{preprocess, ClipSource, ClipTensor, FrameError, PreprocessConfig};
use crate::json::to_canonical_line;
use crate::model::nn::{Ctx, Trainable};
use crate::model::{argmax, ModelError, ParamGroup, PromptBook, PromptCache, PromptInput, PromptSet, XClip};
use crate::seed::stream_rng;

pub const BEST_CHECKPOINT: &str = "best.xckp";
pub const HISTORY_FILE: &str = "history.jsonl";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("could not resolve clip {video}@{start_s}: {source}")]
    DataResolution { video: String, start_s: f64, source: FrameError },
    #[error("label {label} has no prompt for game {game}")]
    LabelNotInPromptSet { label: EventLabel, game: GameId },
    #[error("non-finite gradient for {0}")]
    NonFiniteGradient(String),
    #[error("no training samples")]
    EmptyTrainSet,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn default_freeze() -> Vec<ParamGroup> {
    vec![ParamGroup::TextEncoder, ParamGroup::PromptingModule]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: u32,
    pub lr_max: f64,
    pub lr_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub freeze: Vec<ParamGroup>,
    /// Threads used for per-clip gradients and evaluation.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 4,
            lr_max: 1e-3,
            lr_min: 8e-7,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 8e-5,
            seed: 0,
            freeze: default_freeze(),
            workers: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr_min <= self.lr_max) || self.lr_min < 0.0 {
            return bad("need 0 <= lr_min <= lr_max");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("eps must be positive and weight_decay nonnegative");
        }
        Ok(())
    }

    pub fn trainable(&self) -> Trainable {
        let groups = [ParamGroup::VideoEncoder, ParamGroup::TextEncoder, ParamGroup::PromptingModule, ParamGroup::Head]
            .into_iter()
            .filter(|g| !self.freeze.contains(g))
            .collect();
        Trainable::Groups(groups)
    }
}

/// `lr_min + ½(lr_max − lr_min)(1 + cos(π·epoch/(epochs−1)))`.
pub fn cosine_lr(epoch: u32, cfg: &TrainConfig) -> f64 {
    if cfg.epochs <= 1 {
        return cfg.lr_max;
    }
    if epoch == 0 {
        return cfg.lr_max;
    }
    if epoch >= cfg.epochs - 1 {
        return cfg.lr_min;
    }
    let frac = f64::from(epoch) / f64::from(cfg.epochs - 1);
    cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + (PI * frac).cos())
}

/// First and second moments per parameter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState<F> {
    pub step: u64,
    pub moments: BTreeMap<String, (Mat<F>, Mat<F>)>,
}

/// One AdamW update over every parameter that has a gradient and is not frozen.
pub fn adamw_step<F: Real>(
    model: &mut XClip<F>,
    grads: &BTreeMap<String, Mat<F>>,
    state: &mut OptimizerState<F>,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    for (name, g) in grads {
        if !g.is_finite() {
            return Err(TrainError::NonFiniteGradient(name.clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2): (F, F) = (lit(cfg.beta1), lit(cfg.beta2));
    let one = F::one();
    for (name, g) in grads {
        if cfg.freeze.contains(&ParamGroup::of(name)) {
            continue;
        }
        let Some(theta) = model.params.get_mut(name) else { continue };
        let (m, v) = state
            .moments
            .entry(name.clone())
            .or_insert_with(|| (Mat::zeros(g.rows, g.cols), Mat::zeros(g.rows, g.cols)));
        for i in 0..g.data.len() {
            let gi = g.data[i];
            m.data[i] = b1 * m.data[i] + (one - b1) * gi;
            v.data[i] = b2 * v.data[i] + (one - b2) * gi * gi;
            let m_hat = m.data[i].to_f64().unwrap() / bc1;
            let v_hat = v.data[i].to_f64().unwrap() / bc2;
            let th = theta.data[i].to_f64().unwrap();
            let upd = m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * th;
            theta.data[i] = lit(th - lr * upd);
        }
    }
    if grads.keys().any(|n| matches!(ParamGroup::of(n), ParamGroup::TextEncoder | ParamGroup::PromptingModule)) {
        model.refresh_stamp();
    }
    Ok(())
}

/// A preprocessed clip with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub clip: ClipTensor,
    pub label: EventLabel,
    pub game: GameId,
}

/// Loads and preprocesses every clip of `split`.
pub fn resolve_samples(
    manifest: &DatasetManifest,
    split: Split,
    source: &dyn ClipSource,
    pre: &PreprocessConfig,
) -> Result<Vec<Sample>, TrainError> {
    let refs: Vec<_> = manifest.split(split).collect();
    refs.par_iter()
        .map(|r| {
            let err = |source| TrainError::DataResolution { video: r.video.clone(), start_s: r.clip_start_s, source };
            let raw = source.load(&r.video, r.clip_start_s, 1.0).map_err(err)?;
            let mut clip = preprocess(&raw, pre).map_err(err)?;
            clip.provenance = Some((*r).clone());
            Ok(Sample { clip, label: r.label, game: r.game })
        })
        .collect()
}

/// Cross-entropy and parameter gradients for one sample.
pub fn sample_loss<F: Real>(
    model: &XClip<F>,
    sample: &Sample,
    set: &PromptSet,
    prompts: PromptInput<'_, F>,
    trainable: Trainable,
) -> Result<(f64, bool, BTreeMap<String, Mat<F>>), TrainError> {
    let target = set
        .index_of(sample.label)
        .ok_or(TrainError::LabelNotInPromptSet { label: sample.label, game: sample.game })?;
    let mut ctx = Ctx::new(&model.params, trainable);
    let logits = model.logits(&mut ctx, &sample.clip, set, prompts)?;
    let probs = ctx.g.value(logits).data.clone();
    let pred = probs
        .iter()
        .enumerate()
        .fold((0, F::neg_infinity()), |b, (i, &x)| if x > b.1 { (i, x) } else { b })
        .0;
    let loss = ctx.g.cross_entropy(logits, target);
    let grads = ctx.g.backward(loss);
    let mut out = BTreeMap::new();
    for (name, &var) in ctx.bound() {
        if let Some(g) = grads.get(var) {
            out.insert(name.clone(), g.clone());
        }
    }
    Ok((ctx.g.value(loss).data[0].to_f64().unwrap(), pred == target, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub checkpoint_written: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: XClip<f32>,
    pub best_val_acc: f64,
    pub history: Vec<EpochRecord>,
    /// Mean batch loss after each optimizer step.
    pub step_losses: Vec<f64>,
}

pub fn history_jsonl(history: &[EpochRecord]) -> String {
    history.iter().map(|r| to_canonical_line(r).expect("records serialize")).collect()
}

/// Accuracy of argmax predictions over `samples`.
pub fn evaluate(model: &XClip<f32>, samples: &[Sample], book: &PromptBook, cache: &PromptCache<f32>) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let correct: Vec<bool> = samples
        .par_iter()
        .map(|s| {
            let probs = model.classify(&s.clip, book.get(s.game), cache)?;
            Ok(argmax(&probs).map(|(l, _)| l) == Some(s.label))
        })
        .collect::<Result<_, TrainError>>()?;
    Ok(correct.iter().filter(|&&c| c).count() as f64 / samples.len() as f64)
}

fn run_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Trains `model` in place; returns the parameters with the best validation
/// accuracy. With `out_dir`, writes `best.xckp` whenever validation accuracy
/// strictly improves and `history.jsonl` after every epoch.
pub fn train(
    model: &mut XClip<f32>,
    train_set: &[Sample],
    val_set: &[Sample],
    book: &PromptBook,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    for s in train_set.iter().chain(val_set) {
        if book.get(s.game).index_of(s.label).is_none() {
            return Err(TrainError::LabelNotInPromptSet { label: s.label, game: s.game });
        }
    }
    if let Some(d) = out_dir {
        fs::create_dir_all(d)?;
    }
    run_pool(cfg.workers, || train_inner(model, train_set, val_set, book, cfg, out_dir))
}

fn train_inner(
    model: &mut XClip<f32>,
    train_set: &[Sample],
    val_set: &[Sample],
    book: &PromptBook,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    let trainable = cfg.trainable();
    let text_trainable = !cfg.freeze.contains(&ParamGroup::TextEncoder);
    let mut state = OptimizerState::default();
    let mut history = Vec::new();
    let mut step_losses = Vec::new();
    let mut best = model.clone();
    let mut best_acc = f64::NEG_INFINITY;

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, &format!("shuffle/{epoch}")));

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size as usize) {
            // prompt embeddings fixed for the whole batch
            let cache = PromptCache::new();
            let frozen_model: &XClip<f32> = model;
            let results: Vec<_> = batch
                .par_iter()
                .map(|&i| {
                    let s = &train_set[i];
                    let set = book.get(s.game);
                    if text_trainable {
                        sample_loss(frozen_model, s, set, PromptInput::Encode, trainable.clone())
                    } else {
                        let c = frozen_model.prompt_embeddings(set, &cache).map_err(ModelError::from)?;
                        sample_loss(frozen_model, s, set, PromptInput::Cached(&c), trainable.clone())
                    }
                })
                .collect::<Result<_, TrainError>>()?;

            let mut grads: BTreeMap<String, Mat<f32>> = BTreeMap::new();
            let mut batch_loss = 0.0;
            for (loss, ok, g) in results {
                batch_loss += loss;
                correct += usize::from(ok);
                for (name, m) in g {
                    match grads.get_mut(&name) {
                        Some(acc) => acc.add_assign(&m),
                        None => {
                            grads.insert(name, m);
                        }
                    }
                }
            }
            let inv = 1.0 / batch.len() as f32;
            for g in grads.values_mut() {
                *g = g.map(|x| x * inv);
            }
            loss_sum += batch_loss;
            step_losses.push(batch_loss / batch.len() as f64);
            adamw_step(model, &grads, &mut state, lr, cfg)?;
        }

        let val_acc = evaluate(model, val_set, book, &PromptCache::new())?;
        let improved = val_acc > best_acc;
        if improved {
            best_acc = val_acc;
            best = model.clone();
            if let Some(d) = out_dir {
                let meta = Meta { epoch: Some(epoch), val_accuracy: Some(val_acc) };
                checkpoint::save_fp32(&d.join(BEST_CHECKPOINT), model, meta)?;
            }
        }
        let rec = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            val_acc,
            checkpoint_written: improved && out_dir.is_some(),
        };
        info!(
            "epoch {} lr {:.3e} loss {:.4} train_acc {:.3} val_acc {:.3}{}",
            rec.epoch,
            rec.lr,
            rec.train_loss,
            rec.train_acc,
            rec.val_acc,
            if improved { " *" } else { "" }
        );
        history.push(rec);
        if let Some(d) = out_dir {
            fs::write(d.join(HISTORY_FILE), history_jsonl(&history))?;
        }
    }
    Ok(TrainOutcome { best, best_val_acc: best_acc, history, step_losses })
}
