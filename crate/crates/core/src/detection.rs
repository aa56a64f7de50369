//! Whole-session inference: per-second classification, three-second
//! sliding windows, window scoring and highlight cut lists.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{AnnotatedEvent, EventLabel};
use crate::frames::{preprocess, FrameError, PreprocessConfig, RawClip};
use crate::model::{argmax, ModelError, PromptCache, PromptSet, XClip};
use crate::quant::QuantizedModel;

pub const WINDOW_S: u32 = 3;
pub const PAD_PRE_S: f64 = 2.0;
pub const PAD_POST_S: f64 = 1.0;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("session is shorter than one second")]
    EmptySession,
    #[error(transparent)]
    Frames(#[from] FrameError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cutter: {0}")]
    Cutter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondPrediction {
    pub second_index: u32,
    pub label: EventLabel,
    pub probability: f64,
}

/// Decision for the window `[start_s, start_s + 3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowDecision {
    pub start_s: u32,
    pub label: EventLabel,
    /// Member second the label came from.
    pub source_second: u32,
    pub probability: f64,
}

impl WindowDecision {
    pub fn end_s(&self) -> u32 {
        self.start_s + WINDOW_S
    }
}

/// Anything that turns a preprocessed clip into class probabilities.
pub trait Classifier: Sync {
    fn probabilities(
        &self,
        clip: &crate::frames::ClipTensor,
        set: &PromptSet,
        cache: &PromptCache<f32>,
    ) -> Result<Vec<(EventLabel, f64)>, ModelError>;
}

impl Classifier for XClip<f32> {
    fn probabilities(
        &self,
        clip: &crate::frames::ClipTensor,
        set: &PromptSet,
        cache: &PromptCache<f32>,
    ) -> Result<Vec<(EventLabel, f64)>, ModelError> {
        self.classify(clip, set, cache)
    }
}

impl Classifier for QuantizedModel {
    fn probabilities(
        &self,
        clip: &crate::frames::ClipTensor,
        set: &PromptSet,
        cache: &PromptCache<f32>,
    ) -> Result<Vec<(EventLabel, f64)>, ModelError> {
        self.classify(clip, set, cache)
    }
}

/// One prediction per whole second of `session`, in order.
pub fn classify_session(
    session: &RawClip,
    set: &PromptSet,
    model: &dyn Classifier,
    pre: &PreprocessConfig,
    cache: &PromptCache<f32>,
) -> Result<Vec<SecondPrediction>, DetectError> {
    let n = session.whole_seconds();
    if n == 0 {
        return Err(DetectError::EmptySession);
    }
    (0..n)
        .into_par_iter()
        .map(|s| {
            let clip = preprocess(&session.second(s), pre)?;
            let probs = model.probabilities(&clip, set, cache)?;
            let (label, probability) = argmax(&probs).expect("prompt sets are nonempty");
            Ok(SecondPrediction { second_index: s as u32, label, probability })
        })
        .collect()
}

/// Stride-one three-second windows. A window takes a target label when any
/// member second predicts one; among several, the most probable member wins.
pub fn slide_windows(preds: &[SecondPrediction], targets: &BTreeSet<EventLabel>) -> Vec<WindowDecision> {
    let w = WINDOW_S as usize;
    if preds.len() < w {
        return Vec::new();
    }
    preds
        .windows(w)
        .map(|m| {
            let hit = m
                .iter()
                .filter(|p| targets.contains(&p.label))
                .fold(None, |best: Option<&SecondPrediction>, p| match best {
                    Some(b) if b.probability >= p.probability => Some(b),
                    _ => Some(p),
                });
            match hit {
                Some(p) => WindowDecision {
                    start_s: m[0].second_index,
                    label: p.label,
                    source_second: p.second_index,
                    probability: p.probability,
                },
                None => WindowDecision {
                    start_s: m[0].second_index,
                    label: EventLabel::Background,
                    source_second: m[0].second_index,
                    probability: m.iter().map(|p| p.probability).fold(0.0, f64::max),
                },
            }
        })
        .collect()
}

fn overlaps(a: &AnnotatedEvent, start: f64, end: f64) -> bool {
    a.start_s < end && a.end_s > start
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub per_label: BTreeMap<EventLabel, LabelScore>,
    /// Correct windows over all windows.
    pub average: f64,
}

/// An event window is correct when it overlaps an annotation of the same
/// label; a Background window is correct when it overlaps no event
/// annotation.
pub fn score_windows(decisions: &[WindowDecision], annotations: &[AnnotatedEvent]) -> ScoreTable {
    let mut counts: BTreeMap<EventLabel, (usize, usize)> = BTreeMap::new();
    for d in decisions {
        let (s, e) = (f64::from(d.start_s), f64::from(d.end_s()));
        let ok = if d.label == EventLabel::Background {
            !annotations.iter().any(|a| a.label != EventLabel::Background && overlaps(a, s, e))
        } else {
            annotations.iter().any(|a| a.label == d.label && overlaps(a, s, e))
        };
        let c = counts.entry(d.label).or_default();
        c.0 += usize::from(ok);
        c.1 += 1;
    }
    let per_label = counts
        .iter()
        .map(|(&l, &(correct, total))| (l, LabelScore { correct, total, accuracy: correct as f64 / total as f64 }))
        .collect();
    let (c, t) = counts.values().fold((0, 0), |a, v| (a.0 + v.0, a.1 + v.1));
    ScoreTable { per_label, average: if t > 0 { c as f64 / t as f64 } else { 0.0 } }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub start_s: f64,
    pub end_s: f64,
    pub label: EventLabel,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightEdl {
    pub source: String,
    pub cuts: Vec<Cut>,
}

/// Pads every event window, clamps to `[0, session_s]` and merges cuts that
/// overlap or touch. A merged cut keeps the label of its most probable member.
pub fn build_edl(decisions: &[WindowDecision], source: &str, session_s: f64, pad_pre_s: f64, pad_post_s: f64) -> HighlightEdl {
    let mut raw: Vec<Cut> = decisions
        .iter()
        .filter(|d| d.label != EventLabel::Background)
        .map(|d| Cut {
            start_s: (f64::from(d.start_s) - pad_pre_s).max(0.0),
            end_s: (f64::from(d.end_s()) + pad_post_s).min(session_s),
            label: d.label,
            score: d.probability,
        })
        .filter(|c| c.start_s < c.end_s)
        .collect();
    raw.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.end_s.total_cmp(&b.end_s)));
    let mut cuts: Vec<Cut> = Vec::new();
    for c in raw {
        match cuts.last_mut() {
            Some(last) if c.start_s <= last.end_s => {
                last.end_s = last.end_s.max(c.end_s);
                if c.score > last.score {
                    last.score = c.score;
                    last.label = c.label;
                }
            }
            _ => cuts.push(c),
        }
    }
    HighlightEdl { source: source.to_string(), cuts }
}

/// Runs `template` once per cut with `{input}`, `{start}`, `{dur}` and
/// `{output}` substituted per argument (no shell). Returns the output paths.
pub fn run_cutter(edl: &HighlightEdl, template: &str, input: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, DetectError> {
    let parts: Vec<&str> = template.split_whitespace().collect();
    let (prog, rest) = parts.split_first().ok_or_else(|| DetectError::Cutter("empty cutter command".into()))?;
    let ext = input.extension().and_then(|e| e.to_str()).unwrap_or("mp4");
    let mut outputs = Vec::with_capacity(edl.cuts.len());
    for (i, c) in edl.cuts.iter().enumerate() {
        let output = out_dir.join(format!("cut_{i:04}.{ext}"));
        let subst = |a: &str| {
            a.replace("{input}", &input.to_string_lossy())
                .replace("{start}", &format!("{}", c.start_s))
                .replace("{dur}", &format!("{}", c.end_s - c.start_s))
                .replace("{output}", &output.to_string_lossy())
        };
        let status = Command::new(subst(prog))
            .args(rest.iter().map(|a| subst(a)))
            .stdin(Stdio::null())
            .status()
            .map_err(|e| DetectError::Cutter(format!("{prog}: {e}")))?;
        if !status.success() {
            return Err(DetectError::Cutter(format!("{prog} exited with {status}")));
        }
        outputs.push(output);
    }
    Ok(outputs)
}
