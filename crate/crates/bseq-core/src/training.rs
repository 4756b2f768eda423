//! Sequence loss, optimizer, training loop, and slice-level prediction.
//!
//! The loss is the sum of a macro-averaged soft dice term over the class
//! "bands" of the vertex sequence and a mean cross-entropy term:
//!
//! ```text
//! dice = (1/K) * sum_c [ 1 - 2*sum_k p[k,c]*y[k,c] /
//!                            (sum_k p[k,c] + sum_k y[k,c] + eps) ]
//! ce   = (1/N) * sum_k -log max(p[k, label_k], floor)
//! loss = dice + ce          (unit term weights)
//! ```
//!
//! Its gradient is propagated analytically through the softmax Jacobian so
//! the MLP backward pass only ever sees logit gradients.

use crate::features::{build_feature_grid, sequence_features, FeatureError, FeatureOptions};
use crate::geometry::{
    build_angular_grids, centroid, extract_boundary, generate_vertices_test, perturb_mask,
    sample_vertices_train, GeometryError, VertexSequence,
};
use crate::metrics::{seq_metrics, MetricsError};
use crate::mlp::{
    backward, forward, init_params, ClassProbSequence, MlpError, MlpGrads, MlpParams,
};
use crate::raster::{BinaryMask, GrayImage};
use crate::seeds::{self, stream};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smoothing constant in the dice denominator.
pub const DICE_EPS: f64 = 1e-6;
/// Probability floor inside the cross-entropy log.
pub const CE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum TrainingError {
    #[error("probability and label lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty sequence")]
    EmptySequence,
    #[error("label {0} out of range for {1} classes")]
    LabelOutOfRange(u8, usize),
    #[error("slice {0}: label sequence has {1} entries, expected {2}")]
    BadLabelLength(usize, usize, usize),
    #[error("no training slices")]
    NoTrainSlices,
    #[error("no validation slices")]
    NoValSlices,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Loss value split into its two terms; `total = dice + ce`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeqLossValue {
    pub dice: f64,
    pub ce: f64,
    pub total: f64,
}

/// Dice + cross-entropy over one vertex sequence, with the analytic
/// gradient with respect to the logits (`n x k`, softmax Jacobian already
/// applied).
pub fn seq_dice_ce_loss(
    probs: &ClassProbSequence,
    labels: &[u8],
) -> Result<(SeqLossValue, Vec<f64>), TrainingError> {
    let (n, k) = (probs.n, probs.k);
    if n == 0 {
        return Err(TrainingError::EmptySequence);
    }
    if labels.len() != n {
        return Err(TrainingError::LengthMismatch(n, labels.len()));
    }
    for &l in labels {
        if l as usize >= k {
            return Err(TrainingError::LabelOutOfRange(l, k));
        }
    }

    // Per-class sums: intersection I_c, prediction mass P_c, truth mass G_c.
    let mut inter = vec![0.0; k];
    let mut pred_mass = vec![0.0; k];
    let mut true_mass = vec![0.0; k];
    for i in 0..n {
        let row = probs.row(i);
        let y = labels[i] as usize;
        inter[y] += row[y];
        true_mass[y] += 1.0;
        for c in 0..k {
            pred_mass[c] += row[c];
        }
    }
    let denom: Vec<f64> = (0..k).map(|c| pred_mass[c] + true_mass[c] + DICE_EPS).collect();

    let mut dice = 0.0;
    for c in 0..k {
        dice += 1.0 - 2.0 * inter[c] / denom[c];
    }
    dice /= k as f64;

    let mut ce = 0.0;
    for i in 0..n {
        ce -= probs.row(i)[labels[i] as usize].max(CE_FLOOR).ln();
    }
    ce /= n as f64;

    // d loss / d p[i][c], then through the softmax Jacobian row by row.
    let mut dlogits = vec![0.0; n * k];
    for i in 0..n {
        let row = probs.row(i);
        let y = labels[i] as usize;
        let mut dp = vec![0.0; k];
        for c in 0..k {
            let y_ic = (c == y) as usize as f64;
            dp[c] = -(2.0 / k as f64) * (y_ic * denom[c] - inter[c]) / (denom[c] * denom[c]);
        }
        if row[y] > CE_FLOOR {
            dp[y] += -1.0 / (n as f64 * row[y]);
        }
        // softmax Jacobian: dlogit_j = p_j * (dp_j - sum_c dp_c * p_c).
        let dot: f64 = (0..k).map(|c| dp[c] * row[c]).sum();
        for j in 0..k {
            dlogits[i * k + j] = row[j] * (dp[j] - dot);
        }
    }

    Ok((SeqLossValue { dice, ce, total: dice + ce }, dlogits))
}

/// SGD hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { lr: 0.01, momentum: 0.9, weight_decay: 1e-4, batch_size: 64, epochs: 300 }
    }
}

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl SgdState {
    pub fn zeros(p: &MlpParams) -> Self {
        SgdState {
            w1: vec![0.0; p.w1.len()],
            b1: vec![0.0; p.b1.len()],
            w2: vec![0.0; p.w2.len()],
            b2: vec![0.0; p.b2.len()],
        }
    }
}

/// One SGD step with classical momentum and decoupled-from-nothing weight
/// decay folded into the gradient: `v = mu*v + g + wd*w; w -= lr*v`.
pub fn sgd_step(params: &mut MlpParams, state: &mut SgdState, grads: &MlpGrads, cfg: &SgdConfig) {
    let apply = |w: &mut [f64], v: &mut [f64], g: &[f64]| {
        for i in 0..w.len() {
            v[i] = cfg.momentum * v[i] + g[i] + cfg.weight_decay * w[i];
            w[i] -= cfg.lr * v[i];
        }
    };
    apply(&mut params.w1, &mut state.w1, &grads.w1);
    apply(&mut params.b1, &mut state.b1, &grads.b1);
    apply(&mut params.w2, &mut state.w2, &grads.w2);
    apply(&mut params.b2, &mut state.b2, &grads.b2);
}

/// Pipeline-level configuration shared by training and prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub n_vertices: usize,
    pub hidden: usize,
    pub classes: usize,
    pub features: FeatureOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { n_vertices: 90, hidden: 64, classes: 3, features: FeatureOptions::default() }
    }
}

/// One training example: image, ground-truth mask, per-ray class labels.
#[derive(Debug, Clone)]
pub struct TrainSlice {
    pub image: GrayImage,
    pub mask: BinaryMask,
    pub labels: Vec<u8>,
}

/// Per-epoch log entry (deterministic fields only; wall times live in
/// [`TrainHistory::epoch_wall_ms`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_macro_f1: f64,
}

/// Training log. Everything here except the wall-clock vector is a pure
/// function of the inputs and seed.
#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    /// Measured per-epoch wall time; excluded from determinism guarantees
    /// and from on-disk formats' byte-for-byte reproducibility.
    pub epoch_wall_ms: Vec<f64>,
}

/// Final and best-validation parameters plus the training log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_params: MlpParams,
    pub best_params: MlpParams,
    pub history: TrainHistory,
}

struct PreparedSlice {
    feats_fixed: Option<crate::features::SequenceFeatures>,
    grids: Option<crate::geometry::AngularGrids>,
    grid: crate::features::FeatureGrid,
    labels: Vec<u8>,
}

fn prepare_slice(
    idx: usize,
    slice: &TrainSlice,
    pipe: &PipelineConfig,
    train_time: bool,
) -> Result<PreparedSlice, TrainingError> {
    if slice.labels.len() != pipe.n_vertices {
        return Err(TrainingError::BadLabelLength(idx, slice.labels.len(), pipe.n_vertices));
    }
    for &l in &slice.labels {
        if l as usize >= pipe.classes {
            return Err(TrainingError::LabelOutOfRange(l, pipe.classes));
        }
    }
    let boundary = extract_boundary(&slice.mask)?;
    let pole = centroid(&slice.mask)?;
    let grid = build_feature_grid(&slice.image, &slice.mask, &pipe.features)?;
    if train_time {
        let grids = build_angular_grids(&boundary, pole, pipe.n_vertices)?;
        Ok(PreparedSlice { feats_fixed: None, grids: Some(grids), grid, labels: slice.labels.clone() })
    } else {
        let vs = generate_vertices_test(&boundary, pole, pipe.n_vertices)?;
        let feats = sequence_features(&grid, &vs)?;
        Ok(PreparedSlice { feats_fixed: Some(feats), grids: None, grid, labels: slice.labels.clone() })
    }
}

/// Validation pass: mean loss and pooled macro-F1 over fixed test-time
/// vertices.
fn validate(
    params: &MlpParams,
    val: &[PreparedSlice],
    classes: usize,
) -> Result<(f64, f64), TrainingError> {
    let mut loss_sum = 0.0;
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for slice in val {
        let feats = slice.feats_fixed.as_ref().expect("validation slices are prepared fixed");
        let (probs, _) = forward(params, feats)?;
        let (loss, _) = seq_dice_ce_loss(&probs, &slice.labels)?;
        loss_sum += loss.total;
        preds.extend(probs.argmax());
        gts.extend_from_slice(&slice.labels);
    }
    let f1 = seq_metrics(&preds, &gts, classes, None)?.f1;
    Ok((loss_sum / val.len() as f64, f1))
}

/// Trains the vertex classifier with momentum SGD.
///
/// Per epoch: slice order is reshuffled and every slice's vertices are
/// resampled from its angular grids, both from RNG streams derived from
/// `(seed, epoch, slice)` so reruns are bit-identical. Gradients average
/// over the slices of each batch. The best-validation-macro-F1 parameters
/// (earliest epoch on ties) are returned alongside the final ones.
pub fn train(
    train_slices: &[TrainSlice],
    val_slices: &[TrainSlice],
    pipe: &PipelineConfig,
    sgd: &SgdConfig,
    seed: u64,
) -> Result<TrainOutcome, TrainingError> {
    if train_slices.is_empty() {
        return Err(TrainingError::NoTrainSlices);
    }
    if val_slices.is_empty() {
        return Err(TrainingError::NoValSlices);
    }
    let mut prepared_train = Vec::with_capacity(train_slices.len());
    for (i, s) in train_slices.iter().enumerate() {
        prepared_train.push(prepare_slice(i, s, pipe, true)?);
    }
    let mut prepared_val = Vec::with_capacity(val_slices.len());
    for (i, s) in val_slices.iter().enumerate() {
        prepared_val.push(prepare_slice(i, s, pipe, false)?);
    }

    let dim = pipe.features.feature_dim();
    let mut params = init_params(dim, pipe.hidden, pipe.classes, &mut seeds::rng(seed, &[stream::TRAIN_INIT]))?;
    let mut state = SgdState::zeros(&params);

    let mut best_params = params.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut epochs = Vec::with_capacity(sgd.epochs);
    let mut wall = Vec::with_capacity(sgd.epochs);

    let mut order: Vec<usize> = (0..prepared_train.len()).collect();
    for epoch in 0..sgd.epochs {
        let t0 = std::time::Instant::now();
        order.sort_unstable();
        order.shuffle(&mut seeds::rng(seed, &[stream::TRAIN_SHUFFLE, epoch as u64]));

        let mut loss_sum = 0.0;
        for batch in order.chunks(sgd.batch_size.max(1)) {
            let mut acc = MlpGrads::zeros(&params);
            for &si in batch {
                let slice = &prepared_train[si];
                let grids = slice.grids.as_ref().expect("training slices carry grids");
                let mut vrng = seeds::rng(seed, &[stream::TRAIN_VERTICES, epoch as u64, si as u64]);
                let vs = sample_vertices_train(grids, &mut vrng);
                let feats = sequence_features(&slice.grid, &vs)?;
                let (probs, cache) = forward(&params, &feats)?;
                let (loss, dlogits) = seq_dice_ce_loss(&probs, &slice.labels)?;
                let (grads, _) = backward(&params, &cache, &dlogits);
                acc.add(&grads);
                loss_sum += loss.total;
            }
            acc.scale(1.0 / batch.len() as f64);
            sgd_step(&mut params, &mut state, &acc, sgd);
        }

        let (val_loss, val_f1) = validate(&params, &prepared_val, pipe.classes)?;
        if val_f1 > best_f1 {
            best_f1 = val_f1;
            best_epoch = epoch;
            best_params = params.clone();
        }
        epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / prepared_train.len() as f64,
            val_loss,
            val_macro_f1: val_f1,
        });
        wall.push(t0.elapsed().as_secs_f64() * 1e3);
    }

    Ok(TrainOutcome {
        final_params: params,
        best_params,
        history: TrainHistory { seed, epochs, best_epoch, epoch_wall_ms: wall },
    })
}

/// Where the prediction-time mask comes from: the ground truth itself, or a
/// seeded random perturbation of it (robustness probes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskSource {
    GroundTruth,
    Perturbed { magnitude: f64, seed: u64 },
}

/// Per-slice inference output.
#[derive(Debug, Clone)]
pub struct SlicePrediction {
    pub classes: Vec<u8>,
    pub probs: ClassProbSequence,
    pub vertices: VertexSequence,
    /// The mask inference actually ran on (perturbed when requested).
    pub mask_used: BinaryMask,
}

/// Runs the full test-time pipeline on one slice: (optionally perturbed)
/// mask -> boundary -> deterministic vertices -> features -> MLP -> argmax.
pub fn predict_slice(
    params: &MlpParams,
    image: &GrayImage,
    mask: &BinaryMask,
    pipe: &PipelineConfig,
    source: MaskSource,
) -> Result<SlicePrediction, TrainingError> {
    let mask_used = match source {
        MaskSource::GroundTruth => mask.clone(),
        MaskSource::Perturbed { magnitude, seed } => {
            perturb_mask(mask, magnitude, &mut seeds::rng(seed, &[stream::EVAL_PERTURB]))?
        }
    };
    let boundary = extract_boundary(&mask_used)?;
    let pole = centroid(&mask_used)?;
    let vertices = generate_vertices_test(&boundary, pole, pipe.n_vertices)?;
    let grid = build_feature_grid(image, &mask_used, &pipe.features)?;
    let feats = sequence_features(&grid, &vertices)?;
    let (probs, _) = forward(params, &feats)?;
    let classes = probs.argmax();
    Ok(SlicePrediction { classes, probs, vertices, mask_used })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    /// One-hot probability rows matching the labels exactly.
    fn one_hot(labels: &[u8], k: usize) -> ClassProbSequence {
        let mut probs = vec![0.0; labels.len() * k];
        for (i, &l) in labels.iter().enumerate() {
            probs[i * k + l as usize] = 1.0;
        }
        ClassProbSequence { n: labels.len(), k, probs }
    }

    fn uniform(n: usize, k: usize) -> ClassProbSequence {
        ClassProbSequence { n, k, probs: vec![1.0 / k as f64; n * k] }
    }

    #[test]
    fn perfect_one_hot_prediction_has_negligible_loss() {
        let labels = vec![0u8, 1, 2, 0, 1, 2];
        let (loss, _) = seq_dice_ce_loss(&one_hot(&labels, 3), &labels).unwrap();
        assert!(loss.dice <= 1e-5, "dice = {}", loss.dice);
        assert!(loss.ce <= 1e-5, "ce = {}", loss.ce);
        assert!(loss.total <= 2e-5);
    }

    #[test]
    fn uniform_prediction_on_balanced_labels_hits_known_constants() {
        // With p = 1/3 everywhere and balanced labels, each class's dice
        // term is 1 - (2N/9)/(2N/3) = 2/3 and the CE is ln 3. N large
        // enough keeps the eps perturbation under 1e-9.
        let n = 600;
        let labels: Vec<u8> = (0..n).map(|i| (i % 3) as u8).collect();
        let (loss, _) = seq_dice_ce_loss(&uniform(n, 3), &labels).unwrap();
        assert!((loss.dice - 2.0 / 3.0).abs() <= 1e-9, "dice = {}", loss.dice);
        assert!((loss.ce - 3.0f64.ln()).abs() <= 1e-9, "ce = {}", loss.ce);
        assert_eq!(loss.total, loss.dice + loss.ce);
    }

    #[test]
    fn loss_rejects_malformed_inputs() {
        let labels = vec![0u8, 1];
        assert!(matches!(
            seq_dice_ce_loss(&uniform(3, 3), &labels),
            Err(TrainingError::LengthMismatch(3, 2))
        ));
        assert!(matches!(
            seq_dice_ce_loss(&uniform(0, 3), &[]),
            Err(TrainingError::EmptySequence)
        ));
        assert!(matches!(
            seq_dice_ce_loss(&uniform(2, 3), &[0, 7]),
            Err(TrainingError::LabelOutOfRange(7, 3))
        ));
    }

    #[test]
    fn loss_gradient_matches_finite_differences_through_softmax() {
        use crate::mlp::softmax_row;
        let mut rng = seeds::rng(21, &[]);
        let (n, k) = (7usize, 3usize);
        for trial in 0..10 {
            let logits: Vec<f64> = (0..n * k).map(|_| rand::Rng::gen_range(&mut rng, -2.0..2.0)).collect();
            let labels: Vec<u8> = (0..n).map(|_| rand::Rng::gen_range(&mut rng, 0..k) as u8).collect();
            let eval = |lg: &[f64]| -> f64 {
                let mut probs = vec![0.0; n * k];
                for i in 0..n {
                    softmax_row(&lg[i * k..(i + 1) * k], &mut probs[i * k..(i + 1) * k]);
                }
                let seq = ClassProbSequence { n, k, probs };
                seq_dice_ce_loss(&seq, &labels).unwrap().0.total
            };
            let mut probs = vec![0.0; n * k];
            for i in 0..n {
                softmax_row(&logits[i * k..(i + 1) * k], &mut probs[i * k..(i + 1) * k]);
            }
            let seq = ClassProbSequence { n, k, probs };
            let (_, dlogits) = seq_dice_ce_loss(&seq, &labels).unwrap();

            let h = 1e-5;
            for idx in 0..n * k {
                let mut plus = logits.clone();
                plus[idx] += h;
                let mut minus = logits.clone();
                minus[idx] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let err = (dlogits[idx] - fd).abs() / (dlogits[idx].abs().max(fd.abs()) + 1e-3);
                assert!(
                    err < 1e-6,
                    "trial {trial} dlogits[{idx}]: analytic {} vs fd {fd}",
                    dlogits[idx]
                );
            }
        }
    }

    #[test]
    fn sgd_step_hand_computed_cases() {
        let mk = || MlpParams {
            d: 1,
            hidden: 1,
            k: 2,
            w1: vec![1.0],
            b1: vec![0.0],
            w2: vec![0.0, 0.0],
            b2: vec![0.0, 0.0],
        };
        let grads = |g: f64| MlpGrads { w1: vec![g], b1: vec![0.0], w2: vec![0.0; 2], b2: vec![0.0; 2] };

        // Plain step: momentum 0, decay 0 -> w -= lr * g.
        let mut p = mk();
        let mut s = SgdState::zeros(&p);
        let cfg = SgdConfig { lr: 0.1, momentum: 0.0, weight_decay: 0.0, batch_size: 1, epochs: 0 };
        sgd_step(&mut p, &mut s, &grads(0.5), &cfg);
        assert!((p.w1[0] - (1.0 - 0.05)).abs() < 1e-15);

        // Momentum only: v=1, g=0 -> v'=0.9, w -= lr*0.9.
        let mut p = mk();
        let mut s = SgdState::zeros(&p);
        s.w1[0] = 1.0;
        let cfg = SgdConfig { lr: 0.1, momentum: 0.9, weight_decay: 0.0, batch_size: 1, epochs: 0 };
        sgd_step(&mut p, &mut s, &grads(0.0), &cfg);
        assert!((s.w1[0] - 0.9).abs() < 1e-15);
        assert!((p.w1[0] - (1.0 - 0.09)).abs() < 1e-15);

        // Weight decay only: g=0 -> v = wd*w, w -= lr*wd*w.
        let mut p = mk();
        let mut s = SgdState::zeros(&p);
        let cfg = SgdConfig { lr: 0.01, momentum: 0.0, weight_decay: 1e-4, batch_size: 1, epochs: 0 };
        sgd_step(&mut p, &mut s, &grads(0.0), &cfg);
        assert!((p.w1[0] - (1.0 - 0.01 * 1e-4)).abs() < 1e-15);
    }

    #[test]
    fn one_small_step_along_the_gradient_decreases_the_loss() {
        use crate::features::SequenceFeatures;
        use crate::mlp::{backward, forward, init_params};
        let mut rng = seeds::rng(5, &[]);
        for trial in 0..10 {
            let (d, hidden, k, n) = (6usize, 5usize, 3usize, 8usize);
            let mut params = init_params(d, hidden, k, &mut rng).unwrap();
            let xs = SequenceFeatures {
                n,
                dim: d,
                data: (0..n * d).map(|_| rand::Rng::gen_range(&mut rng, -1.5..1.5)).collect(),
            };
            let labels: Vec<u8> =
                (0..n).map(|_| rand::Rng::gen_range(&mut rng, 0..k) as u8).collect();
            let loss_at = |p: &MlpParams| {
                let (probs, _) = forward(p, &xs).unwrap();
                seq_dice_ce_loss(&probs, &labels).unwrap().0.total
            };
            let before = loss_at(&params);
            let (probs, cache) = forward(&params, &xs).unwrap();
            let (_, dlogits) = seq_dice_ce_loss(&probs, &labels).unwrap();
            let (grads, _) = backward(&params, &cache, &dlogits);
            let cfg =
                SgdConfig { lr: 1e-4, momentum: 0.0, weight_decay: 0.0, batch_size: 1, epochs: 1 };
            let mut state = SgdState::zeros(&params);
            sgd_step(&mut params, &mut state, &grads, &cfg);
            let after = loss_at(&params);
            assert!(after < before, "trial {trial}: loss {before} -> {after}");
        }
    }

    /// Tiny synthetic slice: disk mask whose rim brightness encodes the
    /// class band, learnable in a handful of epochs.
    fn toy_slice(n_vertices: usize, seed: u64) -> TrainSlice {
        let size = 48usize;
        let c = (size as f64 - 1.0) / 2.0;
        let radius = 13.0;
        let mut mask = BinaryMask::new(size, size);
        let mut image = GrayImage::new(size, size);
        let mut rng = seeds::rng(seed, &[0x70f]);
        let band_class = |theta: f64| -> u8 {
            if theta < 120.0 {
                0
            } else if theta < 240.0 {
                1
            } else {
                2
            }
        };
        for y in 0..size {
            for x in 0..size {
                let pp = crate::geometry::to_polar(
                    Point { x: x as f64, y: y as f64 },
                    Point { x: c, y: c },
                );
                mask.set(x, y, pp.r <= radius);
                let rim = (-(pp.r - radius).powi(2) / 4.0).exp();
                let level = match band_class(pp.theta_deg) {
                    0 => 1.0,
                    1 => 0.55,
                    _ => 0.15,
                };
                let noise: f64 = rand::Rng::gen_range(&mut rng, -0.01..0.01);
                image.set(x, y, (0.2 * (pp.r <= radius) as u8 as f64 + level * rim + noise) as f32);
            }
        }
        let labels: Vec<u8> =
            (0..n_vertices).map(|k| band_class(k as f64 * 360.0 / n_vertices as f64)).collect();
        TrainSlice { image, mask, labels }
    }

    #[test]
    fn training_decreases_loss_on_toy_data() {
        let pipe = PipelineConfig { n_vertices: 16, hidden: 16, classes: 3, features: FeatureOptions::default() };
        let sgd = SgdConfig { lr: 0.05, momentum: 0.9, weight_decay: 1e-4, batch_size: 2, epochs: 5 };
        let train_set = vec![toy_slice(16, 1), toy_slice(16, 2)];
        let val_set = vec![toy_slice(16, 3)];
        let out = train(&train_set, &val_set, &pipe, &sgd, 7).unwrap();
        assert_eq!(out.history.epochs.len(), 5);
        let first = out.history.epochs.first().unwrap().train_loss;
        let last = out.history.epochs.last().unwrap().train_loss;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn training_is_bit_reproducible() {
        let pipe = PipelineConfig { n_vertices: 16, hidden: 8, classes: 3, features: FeatureOptions::default() };
        let sgd = SgdConfig { lr: 0.05, momentum: 0.9, weight_decay: 1e-4, batch_size: 2, epochs: 3 };
        let train_set = vec![toy_slice(16, 1), toy_slice(16, 2)];
        let val_set = vec![toy_slice(16, 3)];
        let a = train(&train_set, &val_set, &pipe, &sgd, 11).unwrap();
        let b = train(&train_set, &val_set, &pipe, &sgd, 11).unwrap();
        assert_eq!(a.final_params, b.final_params);
        assert_eq!(a.best_params, b.best_params);
        assert_eq!(a.history.epochs, b.history.epochs);
        assert_eq!(a.history.best_epoch, b.history.best_epoch);
    }

    #[test]
    fn training_with_zero_epochs_returns_initial_params() {
        let pipe = PipelineConfig { n_vertices: 16, hidden: 8, classes: 3, features: FeatureOptions::default() };
        let sgd = SgdConfig { epochs: 0, ..SgdConfig::default() };
        let train_set = vec![toy_slice(16, 1)];
        let val_set = vec![toy_slice(16, 3)];
        let out = train(&train_set, &val_set, &pipe, &sgd, 11).unwrap();
        let init = init_params(34, 8, 3, &mut seeds::rng(11, &[stream::TRAIN_INIT])).unwrap();
        assert_eq!(out.final_params, init);
        assert_eq!(out.best_params, init);
        assert!(out.history.epochs.is_empty());
    }

    #[test]
    fn training_rejects_empty_splits_and_bad_labels() {
        let pipe = PipelineConfig { n_vertices: 16, hidden: 8, classes: 3, features: FeatureOptions::default() };
        let sgd = SgdConfig::default();
        let good = toy_slice(16, 1);
        let one_good = std::slice::from_ref(&good);
        assert!(matches!(train(&[], one_good, &pipe, &sgd, 1), Err(TrainingError::NoTrainSlices)));
        assert!(matches!(train(one_good, &[], &pipe, &sgd, 1), Err(TrainingError::NoValSlices)));
        let mut bad = good.clone();
        bad.labels.pop();
        assert!(matches!(
            train(&[bad], one_good, &pipe, &sgd, 1),
            Err(TrainingError::BadLabelLength(0, 15, 16))
        ));
        let mut bad = good.clone();
        bad.labels[0] = 9;
        assert!(matches!(
            train(&[bad], &[good], &pipe, &sgd, 1),
            Err(TrainingError::LabelOutOfRange(9, 3))
        ));
    }

    #[test]
    fn predict_slice_runs_the_test_time_path() {
        let pipe = PipelineConfig { n_vertices: 16, hidden: 8, classes: 3, features: FeatureOptions::default() };
        let slice = toy_slice(16, 5);
        let params = init_params(34, 8, 3, &mut seeds::rng(3, &[stream::TRAIN_INIT])).unwrap();
        let pred = predict_slice(&params, &slice.image, &slice.mask, &pipe, MaskSource::GroundTruth).unwrap();
        assert_eq!(pred.classes.len(), 16);
        assert_eq!(pred.vertices.len(), 16);
        assert_eq!(pred.mask_used, slice.mask, "ground-truth source keeps the mask");

        let p2 = predict_slice(
            &params,
            &slice.image,
            &slice.mask,
            &pipe,
            MaskSource::Perturbed { magnitude: 2.0, seed: 9 },
        )
        .unwrap();
        assert_ne!(p2.mask_used, slice.mask, "perturbation should move the mask");
        let p3 = predict_slice(
            &params,
            &slice.image,
            &slice.mask,
            &pipe,
            MaskSource::Perturbed { magnitude: 0.0, seed: 9 },
        )
        .unwrap();
        assert_eq!(p3.mask_used, slice.mask, "magnitude 0 is the identity");
        assert_eq!(p3.classes, pred.classes);
    }
}
