//! Patient-level outcome modeling from boundary-class ratios.
//!
//! Per patient, the class labels of every boundary vertex across all slices
//! are pooled into a 3-way ratio vector; the first two ratios (the third is
//! redundant, ratios sum to 1) feed a class-weighted logistic regression
//! against the binary outcome. The positive-class weight and the decision
//! threshold are tuned by maximizing Youden's J over a grid.

use crate::metrics::rank_auc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default gradient-descent iteration count for the logistic fit.
pub const DEFAULT_ITERATIONS: usize = 5000;
/// Default gradient-descent learning rate.
pub const DEFAULT_LR: f64 = 0.1;
/// Default positive-class weight grid, ascending.
pub const DEFAULT_WEIGHT_GRID: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

#[derive(Debug, Error, PartialEq)]
pub enum BiomarkerError {
    #[error("no boundary elements to pool")]
    ZeroTotal,
    #[error("class label {0} out of range")]
    LabelOutOfRange(u8),
    #[error("degenerate labels: both outcome classes must be present")]
    DegenerateLabels,
    #[error("feature and label counts differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("fewer than two samples")]
    TooFewSamples,
    #[error("empty tuning grid")]
    EmptyGrid,
}

/// Per-patient class-ratio vector; `ratios` sums to 1, and `independent()`
/// exposes the two free coordinates used as regression features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerVector {
    pub ratios: [f64; 3],
}

impl BiomarkerVector {
    /// The first two ratios; the third is determined by them.
    pub fn independent(&self) -> [f64; 2] {
        [self.ratios[0], self.ratios[1]]
    }
}

/// Logistic outcome model over the two independent ratios, carrying its
/// tuned operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: [f64; 2],
    pub bias: f64,
    pub class_weight_pos: f64,
    pub threshold: f64,
}

impl LogRegModel {
    /// Predicted positive-class probability.
    pub fn score(&self, features: [f64; 2]) -> f64 {
        let z = self.weights[0] * features[0] + self.weights[1] * features[1] + self.bias;
        sigmoid(z)
    }
}

/// Threshold-level evaluation of a binary scorer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgMetrics {
    pub sensitivity: f64,
    pub specificity: f64,
    /// Rank AUC; `None` when only one outcome class is present.
    pub auc: Option<f64>,
    /// Youden's J = sensitivity + specificity - 1.
    pub j: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Pools vertex class labels from all slices of one patient into ratios.
/// Every vertex counts once; slice order does not matter.
pub fn patient_biomarker(label_sequences: &[Vec<u8>]) -> Result<BiomarkerVector, BiomarkerError> {
    let mut counts = [0usize; 3];
    for seq in label_sequences {
        for &c in seq {
            if c as usize >= 3 {
                return Err(BiomarkerError::LabelOutOfRange(c));
            }
            counts[c as usize] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(BiomarkerError::ZeroTotal);
    }
    Ok(BiomarkerVector {
        ratios: [
            counts[0] as f64 / total as f64,
            counts[1] as f64 / total as f64,
            counts[2] as f64 / total as f64,
        ],
    })
}

/// Sentinel for non-boundary pixels in a rasterized class mask.
pub const NON_BOUNDARY: u8 = 255;

/// Same pooling over rasterized per-pixel class masks (values 0..=2 count,
/// [`NON_BOUNDARY`] is skipped, anything else is an error).
pub fn patient_biomarker_from_masks(masks: &[Vec<u8>]) -> Result<BiomarkerVector, BiomarkerError> {
    let mut counts = [0usize; 3];
    for mask in masks {
        for &c in mask {
            if c == NON_BOUNDARY {
                continue;
            }
            if c as usize >= 3 {
                return Err(BiomarkerError::LabelOutOfRange(c));
            }
            counts[c as usize] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(BiomarkerError::ZeroTotal);
    }
    Ok(BiomarkerVector {
        ratios: [
            counts[0] as f64 / total as f64,
            counts[1] as f64 / total as f64,
            counts[2] as f64 / total as f64,
        ],
    })
}

/// Weighted-mean negative log-likelihood of the model on the data
/// (positives weighted `class_weight_pos`, negatives 1; normalized by the
/// total weight so the learning rate keeps its meaning across weights).
pub fn logreg_nll(
    model: &LogRegModel,
    features: &[[f64; 2]],
    labels: &[u8],
) -> Result<f64, BiomarkerError> {
    if features.len() != labels.len() {
        return Err(BiomarkerError::LengthMismatch(features.len(), labels.len()));
    }
    let mut loss = 0.0;
    let mut weight_sum = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let w = if y == 1 { model.class_weight_pos } else { 1.0 };
        let p = model.score(*x).clamp(1e-12, 1.0 - 1e-12);
        loss += w * if y == 1 { -p.ln() } else { -(1.0 - p).ln() };
        weight_sum += w;
    }
    Ok(loss / weight_sum)
}

/// Fits the logistic model by full-batch gradient descent from zero
/// initialization; deterministic. The returned threshold is 0.5 (tune it
/// with [`tune_youden`]).
pub fn fit_logreg(
    features: &[[f64; 2]],
    labels: &[u8],
    class_weight_pos: f64,
    iterations: usize,
    lr: f64,
) -> Result<LogRegModel, BiomarkerError> {
    if features.len() != labels.len() {
        return Err(BiomarkerError::LengthMismatch(features.len(), labels.len()));
    }
    if features.len() < 2 {
        return Err(BiomarkerError::TooFewSamples);
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(BiomarkerError::DegenerateLabels);
    }

    let mut model = LogRegModel { weights: [0.0, 0.0], bias: 0.0, class_weight_pos, threshold: 0.5 };
    let mut weight_sum = 0.0;
    for &y in labels {
        weight_sum += if y == 1 { class_weight_pos } else { 1.0 };
    }
    for _ in 0..iterations {
        let mut grad = [0.0f64; 2];
        let mut grad_bias = 0.0;
        for (x, &y) in features.iter().zip(labels) {
            let w = if y == 1 { class_weight_pos } else { 1.0 };
            let err = w * (model.score(*x) - y as f64);
            grad[0] += err * x[0];
            grad[1] += err * x[1];
            grad_bias += err;
        }
        model.weights[0] -= lr * grad[0] / weight_sum;
        model.weights[1] -= lr * grad[1] / weight_sum;
        model.bias -= lr * grad_bias / weight_sum;
    }
    Ok(model)
}

/// Sensitivity/specificity/AUC/J of `scores` against binary `labels` with
/// positives predicted at `score >= threshold`.
pub fn prog_metrics(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
) -> Result<ProgMetrics, BiomarkerError> {
    if scores.len() != labels.len() {
        return Err(BiomarkerError::LengthMismatch(scores.len(), labels.len()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        let pos = s >= threshold;
        match (y == 1, pos) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    let sensitivity = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let specificity = if tn + fp == 0 { 0.0 } else { tn as f64 / (tn + fp) as f64 };
    let positives: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
    let auc = rank_auc(scores, &positives);
    Ok(ProgMetrics { sensitivity, specificity, auc, j: sensitivity + specificity - 1.0 })
}

/// The default threshold grid: 0, 0.01, ..., 1.
pub fn default_threshold_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Fits one model per positive-class weight, sweeps the threshold grid on
/// the same data, and returns the model/operating point maximizing Youden's
/// J. Ties prefer the smaller weight, then the smaller threshold (grids are
/// scanned in sorted ascending order).
pub fn tune_youden(
    features: &[[f64; 2]],
    labels: &[u8],
    weight_grid: &[f64],
    threshold_grid: &[f64],
    iterations: usize,
    lr: f64,
) -> Result<(LogRegModel, ProgMetrics), BiomarkerError> {
    if weight_grid.is_empty() || threshold_grid.is_empty() {
        return Err(BiomarkerError::EmptyGrid);
    }
    let mut weights = weight_grid.to_vec();
    weights.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut thresholds = threshold_grid.to_vec();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut best: Option<(LogRegModel, ProgMetrics)> = None;
    for &w in &weights {
        let mut model = fit_logreg(features, labels, w, iterations, lr)?;
        let scores: Vec<f64> = features.iter().map(|x| model.score(*x)).collect();
        for &t in &thresholds {
            let m = prog_metrics(&scores, labels, t)?;
            if best.as_ref().is_none_or(|(_, bm)| m.j > bm.j) {
                model.threshold = t;
                best = Some((model, m));
            }
        }
    }
    Ok(best.expect("grids are nonempty"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn biomarker_ratios_pool_and_normalize() {
        let v = patient_biomarker(&[vec![0; 60], vec![1; 10], vec![2; 30]]).unwrap();
        assert_eq!(v.ratios, [0.6, 0.1, 0.3]);
        assert_eq!(v.independent(), [0.6, 0.1]);

        let all0 = patient_biomarker(&[vec![0; 7]]).unwrap();
        assert_eq!(all0.ratios, [1.0, 0.0, 0.0]);

        // Pooling, not per-slice averaging.
        let pooled = patient_biomarker(&[vec![0; 10], vec![1; 10]]).unwrap();
        assert_eq!(pooled.ratios, [0.5, 0.5, 0.0]);

        assert_eq!(patient_biomarker(&[vec![]]), Err(BiomarkerError::ZeroTotal));
        assert_eq!(patient_biomarker(&[vec![3]]), Err(BiomarkerError::LabelOutOfRange(3)));
    }

    #[test]
    fn biomarker_ratios_are_order_invariant_and_sum_to_one() {
        let a = patient_biomarker(&[vec![0, 1, 2, 1], vec![2, 2, 0]]).unwrap();
        let b = patient_biomarker(&[vec![2, 2, 0], vec![0, 1, 2, 1]]).unwrap();
        assert_eq!(a, b);
        assert!((a.ratios.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mask_pooling_skips_the_background_sentinel() {
        let v = patient_biomarker_from_masks(&[vec![NON_BOUNDARY, 0, 1, NON_BOUNDARY, 1]]).unwrap();
        assert_eq!(v.ratios, [1.0 / 3.0, 2.0 / 3.0, 0.0]);
        assert_eq!(
            patient_biomarker_from_masks(&[vec![NON_BOUNDARY; 4]]),
            Err(BiomarkerError::ZeroTotal)
        );
        assert_eq!(
            patient_biomarker_from_masks(&[vec![0, 9]]),
            Err(BiomarkerError::LabelOutOfRange(9))
        );
    }

    #[test]
    fn symmetric_two_point_data_puts_the_boundary_at_the_midpoint() {
        let features = [[-1.0, 0.0], [1.0, 0.0]];
        let labels = [0u8, 1u8];
        let model = fit_logreg(&features, &labels, 1.0, DEFAULT_ITERATIONS, DEFAULT_LR).unwrap();
        assert!((model.score([0.0, 0.0]) - 0.5).abs() < 1e-6);
        assert!(model.score([1.0, 0.0]) > 0.5);
        assert!(model.score([-1.0, 0.0]) < 0.5);
    }

    #[test]
    fn separable_instance_reaches_perfect_training_accuracy() {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            features.push([0.1 + 0.02 * i as f64, 0.3]);
            labels.push(0u8);
            features.push([0.6 + 0.02 * i as f64, 0.1]);
            labels.push(1u8);
        }
        let model = fit_logreg(&features, &labels, 1.0, DEFAULT_ITERATIONS, DEFAULT_LR).unwrap();
        for (x, &y) in features.iter().zip(&labels) {
            assert_eq!((model.score(*x) >= 0.5) as u8, y, "misclassified {x:?}");
        }
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        let xs = [[0.0, 0.0], [1.0, 1.0]];
        assert_eq!(
            fit_logreg(&xs, &[1, 1], 1.0, 10, 0.1),
            Err(BiomarkerError::DegenerateLabels)
        );
        assert_eq!(
            fit_logreg(&xs[..1], &[1], 1.0, 10, 0.1),
            Err(BiomarkerError::TooFewSamples)
        );
        assert_eq!(
            fit_logreg(&xs, &[1], 1.0, 10, 0.1),
            Err(BiomarkerError::LengthMismatch(2, 1))
        );
    }

    #[test]
    fn nll_is_non_increasing_under_gradient_descent() {
        // Fixed mildly noisy instance; track the loss every 50 iterations.
        let features: Vec<[f64; 2]> = (0..20)
            .map(|i| [(i as f64) / 20.0, ((i * 7) % 20) as f64 / 20.0])
            .collect();
        let labels: Vec<u8> = (0..20).map(|i| (i >= 9) as u8).collect();
        let mut prev = f64::INFINITY;
        for steps in (0..=500).step_by(50) {
            let model = fit_logreg(&features, &labels, 2.0, steps, 0.05).unwrap();
            let nll = logreg_nll(&model, &features, &labels).unwrap();
            assert!(nll <= prev + 1e-12, "NLL rose from {prev} to {nll} at {steps} steps");
            prev = nll;
        }
    }

    #[test]
    fn raising_the_positive_weight_never_shrinks_the_positive_count() {
        let features: Vec<[f64; 2]> = (0..24)
            .map(|i| [(i % 12) as f64 / 12.0, ((i * 5) % 24) as f64 / 24.0])
            .collect();
        let labels: Vec<u8> = (0..24).map(|i| (i % 4 == 0) as u8).collect();
        let mut prev_count = 0usize;
        for w in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let model = fit_logreg(&features, &labels, w, 2000, 0.1).unwrap();
            let count = features.iter().filter(|x| model.score(**x) >= 0.5).count();
            assert!(
                count >= prev_count,
                "weight {w}: positive count fell from {prev_count} to {count}"
            );
            prev_count = count;
        }
    }

    #[test]
    fn prog_metrics_match_hand_counts() {
        let scores = [0.9, 0.8, 0.3, 0.1];
        let labels = [1u8, 0, 1, 0];
        let m = prog_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!(m.sensitivity, 0.5); // one of two positives above 0.5
        assert_eq!(m.specificity, 0.5); // one of two negatives below 0.5
        assert_eq!(m.j, 0.0);
        assert_eq!(m.auc, Some(0.75)); // pairs: (.9,.8)+, (.9,.1)+, (.3,.8)-, (.3,.1)+

        let perfect = prog_metrics(&[0.0, 1.0], &[0, 1], 0.5).unwrap();
        assert_eq!(
            perfect,
            ProgMetrics { sensitivity: 1.0, specificity: 1.0, auc: Some(1.0), j: 1.0 }
        );
        let anti = prog_metrics(&[1.0, 0.0], &[0, 1], 0.5).unwrap();
        assert_eq!(anti.auc, Some(0.0));
        // Threshold 0 predicts everything positive.
        let all_pos = prog_metrics(&[0.2, 0.7], &[0, 1], 0.0).unwrap();
        assert_eq!((all_pos.sensitivity, all_pos.specificity, all_pos.j), (1.0, 0.0, 0.0));
        // Single-class labels: AUC undefined, the rest computed.
        let single = prog_metrics(&[0.2, 0.7], &[1, 1], 0.5).unwrap();
        assert_eq!(single.auc, None);
        assert_eq!(single.sensitivity, 0.5);
        assert_eq!(single.specificity, 0.0);
    }

    #[test]
    fn youden_tuning_finds_a_perfect_operating_point_when_separable() {
        let features: Vec<[f64; 2]> =
            (0..12).map(|i| [if i < 6 { 0.1 } else { 0.7 }, 0.2]).collect();
        let labels: Vec<u8> = (0..12).map(|i| (i >= 6) as u8).collect();
        let (model, m) = tune_youden(
            &features,
            &labels,
            &DEFAULT_WEIGHT_GRID,
            &default_threshold_grid(),
            DEFAULT_ITERATIONS,
            DEFAULT_LR,
        )
        .unwrap();
        assert_eq!(m.j, 1.0);
        assert_eq!((m.sensitivity, m.specificity), (1.0, 1.0));
        let scores: Vec<f64> = features.iter().map(|x| model.score(*x)).collect();
        let re = prog_metrics(&scores, &labels, model.threshold).unwrap();
        assert_eq!(re.j, 1.0, "operating point must reproduce the reported J");
    }

    #[test]
    fn youden_ties_break_toward_smaller_weight_and_threshold() {
        // Scores are monotone in x for every weight, so many (weight,
        // threshold) pairs reach J = 1; the smallest must win.
        let features: Vec<[f64; 2]> = (0..8).map(|i| [i as f64, 0.0]).collect();
        let labels = [0u8, 0, 0, 0, 1, 1, 1, 1];
        let (model, m) = tune_youden(
            &features,
            &labels,
            &[2.0, 1.0, 0.5], // deliberately unsorted
            &default_threshold_grid(),
            500,
            0.5,
        )
        .unwrap();
        assert_eq!(m.j, 1.0);
        assert_eq!(model.class_weight_pos, 0.5, "smallest tying weight wins");
        let scores: Vec<f64> = features.iter().map(|x| model.score(*x)).collect();
        let lo = scores.iter().take(4).cloned().fold(f64::MIN, f64::max);
        // The chosen threshold is the smallest grid point above every
        // negative's score.
        let expected = (0..=100)
            .map(|i| i as f64 / 100.0)
            .find(|t| *t > lo)
            .unwrap();
        assert_eq!(model.threshold, expected);
    }

    #[test]
    fn youden_sweep_maximum_matches_exhaustive_reevaluation() {
        let features: Vec<[f64; 2]> = (0..16)
            .map(|i| [((i * 3) % 16) as f64 / 16.0, ((i * 5) % 16) as f64 / 16.0])
            .collect();
        let labels: Vec<u8> = (0..16).map(|i| ((i * 3) % 16 >= 8) as u8).collect();
        let grid = default_threshold_grid();
        let (_, best) =
            tune_youden(&features, &labels, &DEFAULT_WEIGHT_GRID, &grid, 800, 0.1).unwrap();
        let mut exhaustive: f64 = f64::MIN;
        for &w in &DEFAULT_WEIGHT_GRID {
            let model = fit_logreg(&features, &labels, w, 800, 0.1).unwrap();
            let scores: Vec<f64> = features.iter().map(|x| model.score(*x)).collect();
            for &t in &grid {
                exhaustive = exhaustive.max(prog_metrics(&scores, &labels, t).unwrap().j);
            }
        }
        assert_eq!(best.j, exhaustive);
        assert!((-1.0..=1.0).contains(&best.j));
    }
}
