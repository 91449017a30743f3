//! Confusion-matrix metrics and rank AUC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Operating point for the confusion counts.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    pub accuracy: f64,
    /// `None` when the labels hold a single class.
    pub auc: Option<f64>,
}

impl MetricsReport {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// The AUC, or [`Error::AucUndefined`] for single-class labels.
    pub fn auc(&self) -> Result<f64> {
        self.auc.ok_or(Error::AucUndefined)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// A score at or above `threshold` is predicted fraud.
pub fn compute_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no scores to evaluate".into()));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite score {s}")));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricsReport {
        tp,
        tn,
        fp,
        fn_,
        precision,
        recall,
        f,
        accuracy: ratio(tp + tn, scores.len()),
        auc: rank_auc(scores, labels),
    })
}

/// Fraction of (positive, negative) pairs ordered correctly, ties counting
/// one half. Computed from average ranks in `O(n log n)`.
pub fn rank_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y != 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of doubled 1-based average ranks of the positives, kept integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let doubled_avg = (i + 1 + j + 1) as u128;
        for &k in &order[i..=j] {
            if labels[k] != 0 {
                rank_sum2 += doubled_avg;
            }
        }
        i = j + 1;
    }
    let (p, q) = (n_pos as u128, n_neg as u128);
    let u2 = rank_sum2 - p * (p + 1);
    Some(u2 as f64 / (2 * p * q) as f64)
}
