//! k-steps-before-outcome evaluation.

use serde::{Deserialize, Serialize};

use super::dataset::LabeledSequence;
use super::trainer::TrainedModel;
use crate::{Error, Result};

/// Classification metrics at a fixed horizon and threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Number of trailing events hidden from the model.
    pub k: usize,
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Sequences with `T <= k`, left out of every count below.
    pub excluded: usize,
    pub accuracy: f64,
    /// 0 when nothing was predicted positive.
    pub precision: f64,
    /// 0 when there are no positives.
    pub recall: f64,
    /// Absent when only one class is present.
    pub auc: Option<f64>,
}

impl EvalReport {
    pub fn evaluated(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Scores each sequence on its first `T - k` events.
///
/// Returns `(score, label)` pairs for the retained sequences and the number
/// of sequences excluded for being too short.
pub fn scores_at_k(model: &TrainedModel, data: &[LabeledSequence], k: usize) -> Result<(Vec<(f64, bool)>, usize)> {
    use rayon::prelude::*;
    let kept: Vec<&LabeledSequence> = data.iter().filter(|d| d.sequence.len() > k).collect();
    let excluded = data.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::Eval(format!("no sequence longer than k={k} among {} eval sequences", data.len())));
    }
    let scores = kept
        .par_iter()
        .map(|d| {
            let prefix = d.sequence.prefix(d.sequence.len() - k);
            Ok((model.predict(&prefix)?, d.label.is_positive()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((scores, excluded))
}

pub fn evaluate_at_k(model: &TrainedModel, data: &[LabeledSequence], k: usize, threshold: f64) -> Result<EvalReport> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {threshold} outside [0, 1]")));
    }
    let (scores, excluded) = scores_at_k(model, data, k)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for &(p, y) in &scores {
        match (p >= threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(EvalReport {
        k,
        threshold,
        tp,
        fp,
        tn,
        fn_,
        excluded,
        accuracy: ratio(tp + tn, scores.len()),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        auc: roc_auc(&scores),
    })
}

/// Area under the ROC curve via the Mann-Whitney rank sum, ties averaged.
pub fn roc_auc(scores: &[(f64, bool)]) -> Option<f64> {
    let pos = scores.iter().filter(|s| s.1).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].0 == scores[order[i]].0 {
            j += 1;
        }
        // ranks are 1-based; a tie group shares its mean rank
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mean_rank * order[i..=j].iter().filter(|&&o| scores[o].1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos * neg) as f64)
}
