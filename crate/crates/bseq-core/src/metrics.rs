//! Sequence-level classification metrics and mask overlap.
//!
//! Conventions: the confusion matrix has ground truth on rows, predictions
//! on columns. Macro averages run over all `k` classes with the zero
//! conventions spelled out per metric. AUC is the rank-statistic
//! (Mann-Whitney) area with tied scores counted half.

use crate::mlp::ClassProbSequence;
use crate::raster::BinaryMask;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no sequences")]
    Empty,
    #[error("prediction and ground-truth lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label {0} out of range for {1} classes")]
    LabelOutOfRange(u8, usize),
    #[error("probability shape {0}x{1} does not match {2} items of {3} classes")]
    ProbShapeMismatch(usize, usize, usize, usize),
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    MaskDimensionMismatch(usize, usize, usize, usize),
}

/// Macro-averaged sequence metrics. `auc` is present only when
/// probabilities were supplied and at least one class had both positives
/// and negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

/// K x K confusion matrix: `m[gt][pred]`.
pub fn confusion(preds: &[u8], gts: &[u8], k: usize) -> Result<Vec<Vec<usize>>, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    if preds.len() != gts.len() {
        return Err(MetricsError::LengthMismatch(preds.len(), gts.len()));
    }
    let mut m = vec![vec![0usize; k]; k];
    for (&p, &g) in preds.iter().zip(gts) {
        if p as usize >= k {
            return Err(MetricsError::LabelOutOfRange(p, k));
        }
        if g as usize >= k {
            return Err(MetricsError::LabelOutOfRange(g, k));
        }
        m[g as usize][p as usize] += 1;
    }
    Ok(m)
}

/// Binary ranking AUC by the midrank method: equals the fraction of
/// positive/negative pairs ranked correctly, ties counting one half.
/// Returns `None` unless both classes are present.
pub fn rank_auc(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let n = scores.len();
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("scores must not be NaN"));
    // Walk tie groups, assigning the average 1-based rank to each member.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if positives[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Macro precision/recall/F1, accuracy, and (given probabilities) macro
/// one-vs-rest rank AUC over a pooled label sequence.
///
/// Zero conventions: a class with no predicted and no true items
/// contributes 0 to every macro average; a class missing positives or
/// negatives is skipped by the AUC average.
pub fn seq_metrics(
    preds: &[u8],
    gts: &[u8],
    k: usize,
    probs: Option<&ClassProbSequence>,
) -> Result<SeqMetrics, MetricsError> {
    let m = confusion(preds, gts, k)?;
    if let Some(p) = probs {
        if p.n != preds.len() || p.k != k {
            return Err(MetricsError::ProbShapeMismatch(p.n, p.k, preds.len(), k));
        }
    }
    let total: usize = preds.len();
    let mut trace = 0usize;
    let mut macro_p = 0.0;
    let mut macro_r = 0.0;
    let mut macro_f1 = 0.0;
    for c in 0..k {
        let tp = m[c][c];
        trace += tp;
        let pred_c: usize = (0..k).map(|g| m[g][c]).sum();
        let true_c: usize = m[c].iter().sum();
        let p = if pred_c > 0 { tp as f64 / pred_c as f64 } else { 0.0 };
        let r = if true_c > 0 { tp as f64 / true_c as f64 } else { 0.0 };
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        macro_p += p;
        macro_r += r;
        macro_f1 += f1;
    }
    let kf = k as f64;

    let auc = probs.and_then(|p| {
        let mut sum = 0.0;
        let mut counted = 0usize;
        for c in 0..k {
            let scores: Vec<f64> = (0..p.n).map(|i| p.row(i)[c]).collect();
            let pos: Vec<bool> = gts.iter().map(|&g| g as usize == c).collect();
            if let Some(a) = rank_auc(&scores, &pos) {
                sum += a;
                counted += 1;
            }
        }
        if counted > 0 {
            Some(sum / counted as f64)
        } else {
            None
        }
    });

    Ok(SeqMetrics {
        precision: macro_p / kf,
        recall: macro_r / kf,
        f1: macro_f1 / kf,
        accuracy: trace as f64 / total as f64,
        auc,
    })
}

/// Dice-Sørensen coefficient of two masks: `2|A∩B| / (|A| + |B|)`, defined
/// as 1 when both masks are empty.
pub fn dsc(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricsError> {
    if a.width != b.width || a.height != b.height {
        return Err(MetricsError::MaskDimensionMismatch(a.width, a.height, b.width, b.height));
    }
    let mut inter = 0usize;
    for i in 0..a.data.len() {
        inter += (a.data[i] != 0 && b.data[i] != 0) as usize;
    }
    let denom = a.count() + b.count();
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / denom as f64)
}

/// Agreement between two annotators: `a` scored against `b` as ground
/// truth, with one-hot probabilities taken from `a`.
pub fn inter_reader(a: &[u8], b: &[u8], k: usize) -> Result<SeqMetrics, MetricsError> {
    let mut probs = vec![0.0; a.len() * k];
    for (i, &c) in a.iter().enumerate() {
        if (c as usize) < k {
            probs[i * k + c as usize] = 1.0;
        }
    }
    let one_hot = ClassProbSequence { n: a.len(), k, probs };
    seq_metrics(a, b, k, Some(&one_hot))
}
