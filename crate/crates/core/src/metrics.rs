//! Accuracy, macro F-score and one-vs-one ROC AUC over evaluation records.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{EventLabel, GameId};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no records")]
    EmptyInput,
    #[error("AUC needs at least two classes among the true labels")]
    SingleClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub true_label: EventLabel,
    pub probabilities: BTreeMap<EventLabel, f64>,
    pub game: GameId,
}

impl EvalRecord {
    pub fn new(true_label: EventLabel, game: GameId, probs: &[(EventLabel, f64)]) -> Self {
        Self { true_label, probabilities: probs.iter().copied().collect(), game }
    }

    /// Highest-probability label; the lowest label wins ties.
    pub fn predicted(&self) -> EventLabel {
        self.probabilities
            .iter()
            .fold(None, |best: Option<(EventLabel, f64)>, (&l, &p)| match best {
                Some((_, bp)) if bp >= p => best,
                _ => Some((l, p)),
            })
            .map_or(self.true_label, |(l, _)| l)
    }

    pub fn prob(&self, label: EventLabel) -> f64 {
        self.probabilities.get(&label).copied().unwrap_or(0.0)
    }

    pub fn is_correct(&self) -> bool {
        self.predicted() == self.true_label
    }
}

pub fn accuracy(records: &[EvalRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(records.iter().filter(|r| r.is_correct()).count() as f64 / records.len() as f64)
}

/// Per-class one-vs-rest F1 and their unweighted mean over the classes that
/// occur as true labels.
pub fn macro_f1(records: &[EvalRecord]) -> Result<(BTreeMap<EventLabel, f64>, f64), MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut counts: BTreeMap<EventLabel, (usize, usize, usize)> = BTreeMap::new();
    for r in records {
        let pred = r.predicted();
        if pred == r.true_label {
            counts.entry(pred).or_default().0 += 1;
        } else {
            counts.entry(pred).or_default().1 += 1;
            counts.entry(r.true_label).or_default().2 += 1;
        }
    }
    let per_class: BTreeMap<EventLabel, f64> = counts
        .iter()
        .map(|(&l, &(tp, fp, fn_))| {
            let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
            let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
            (l, if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
        })
        .collect();
    let present: BTreeSet<EventLabel> = records.iter().map(|r| r.true_label).collect();
    let macro_ = present.iter().map(|l| per_class[l]).sum::<f64>() / present.len() as f64;
    Ok((per_class, macro_))
}

/// Mann–Whitney AUC from average ranks; tied scores count one half.
pub fn auc_rank_sum(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * all[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

/// Area under the ROC curve by sweeping thresholds over distinct scores.
pub fn auc_trapezoid(pos: &[f64], neg: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = pos.iter().chain(neg).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let (mut prev_tpr, mut prev_fpr, mut area) = (0.0, 0.0, 0.0);
    for t in thresholds {
        let tpr = pos.iter().filter(|&&s| s >= t).count() as f64 / np;
        let fpr = neg.iter().filter(|&&s| s >= t).count() as f64 / nn;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    area + (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0
}

fn pair_score(r: &EvalRecord, a: EventLabel, b: EventLabel) -> f64 {
    let (pa, pb) = (r.prob(a), r.prob(b));
    if pa + pb > 0.0 {
        pa / (pa + pb)
    } else {
        0.5
    }
}

/// One-vs-one AUC of `a` against `b` on records whose true label is either.
pub fn pair_auc(records: &[EvalRecord], a: EventLabel, b: EventLabel, auc: fn(&[f64], &[f64]) -> f64) -> f64 {
    let sub: Vec<&EvalRecord> = records.iter().filter(|r| r.true_label == a || r.true_label == b).collect();
    let side = |x: EventLabel, y: EventLabel| {
        let pos: Vec<f64> = sub.iter().filter(|r| r.true_label == x).map(|r| pair_score(r, x, y)).collect();
        let neg: Vec<f64> = sub.iter().filter(|r| r.true_label == y).map(|r| pair_score(r, x, y)).collect();
        auc(&pos, &neg)
    };
    (side(a, b) + side(b, a)) / 2.0
}

fn ovo_with(records: &[EvalRecord], auc: fn(&[f64], &[f64]) -> f64) -> Result<f64, MetricsError> {
    let classes: Vec<EventLabel> = records.iter().map(|r| r.true_label).collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(MetricsError::SingleClass);
    }
    let mut total = 0.0;
    let mut pairs = 0;
    for i in 0..classes.len() {
        for j in i + 1..classes.len() {
            total += pair_auc(records, classes[i], classes[j], auc);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Unweighted mean over class pairs of the symmetric one-vs-one AUC.
pub fn ovo_auc(records: &[EvalRecord]) -> Result<f64, MetricsError> {
    ovo_with(records, auc_rank_sum)
}

/// [`ovo_auc`] computed with the threshold-sweep curve instead of ranks.
pub fn ovo_auc_trapezoid(records: &[EvalRecord]) -> Result<f64, MetricsError> {
    ovo_with(records, auc_trapezoid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRow {
    pub game: GameId,
    pub n: usize,
    pub accuracy: f64,
    pub avg_f: f64,
    pub avg_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub event: EventLabel,
    pub n: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub n: usize,
    pub accuracy: f64,
    pub avg_f: f64,
    pub avg_auc: Option<f64>,
    pub per_game: Vec<GameRow>,
    pub per_event: Vec<EventRow>,
}

pub fn report(records: &[EvalRecord]) -> Result<Report, MetricsError> {
    let accuracy_all = accuracy(records)?;
    let (_, avg_f) = macro_f1(records)?;
    let games: BTreeSet<GameId> = records.iter().map(|r| r.game).collect();
    let per_game = games
        .into_iter()
        .map(|g| {
            let sub: Vec<EvalRecord> = records.iter().filter(|r| r.game == g).cloned().collect();
            Ok(GameRow {
                game: g,
                n: sub.len(),
                accuracy: accuracy(&sub)?,
                avg_f: macro_f1(&sub)?.1,
                avg_auc: ovo_auc(&sub).ok(),
            })
        })
        .collect::<Result<_, MetricsError>>()?;
    let events: BTreeSet<EventLabel> = records.iter().map(|r| r.true_label).collect();
    let per_event = events
        .into_iter()
        .map(|e| {
            let sub: Vec<&EvalRecord> = records.iter().filter(|r| r.true_label == e).collect();
            let ok = sub.iter().filter(|r| r.is_correct()).count();
            EventRow { event: e, n: sub.len(), accuracy: ok as f64 / sub.len() as f64 }
        })
        .collect();
    Ok(Report {
        n: records.len(),
        accuracy: accuracy_all,
        avg_f,
        avg_auc: ovo_auc(records).ok(),
        per_game,
        per_event,
    })
}
