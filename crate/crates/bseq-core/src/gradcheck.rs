//! Finite-difference verification of the full analytic gradient chain:
//! dice + cross-entropy loss, softmax, and the two-layer GELU network.
//!
//! Every parameter coordinate (and every input coordinate) of a batch of
//! random small instances is perturbed by ±h and the central difference is
//! compared against the analytic gradient. Errors are relative with an
//! additive guard in the denominator so near-zero gradients (dead GELU
//! units) do not inflate the ratio while sign flips still register.

use crate::features::SequenceFeatures;
use crate::mlp::{backward_impl, forward, init_params, MlpParams};
use crate::seeds::{self, stream};
use crate::training::seq_dice_ce_loss;
use rand::Rng;
use serde::Serialize;

/// Maximum admissible relative error.
pub const TOLERANCE: f64 = 1e-5;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Additive denominator guard for the relative error.
pub const REL_GUARD: f64 = 1e-3;
/// Default number of random instances.
pub const DEFAULT_INSTANCES: usize = 20;

/// Worst relative error observed for one tensor across all instances.
#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_err: f64,
}

/// Outcome of a finite-difference sweep.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub instances: usize,
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
    /// Name and error of the single worst coordinate's tensor.
    pub worst_tensor: String,
    pub worst_rel_err: f64,
    pub pass: bool,
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs().max(numeric.abs()) + REL_GUARD)
}

/// Total loss of `params` on `(xs, labels)`.
fn loss_of(params: &MlpParams, xs: &SequenceFeatures, labels: &[u8]) -> f64 {
    let (probs, _) = forward(params, xs).expect("shapes fixed by construction");
    seq_dice_ce_loss(&probs, labels).expect("labels valid by construction").0.total
}

/// Runs the sweep over `instances` random instances (dims d, hidden <= 8,
/// sequence length <= 7). `flip_gelu_derivative` is a mutation hook that
/// negates the GELU derivative inside the backward pass; a run with it set
/// must fail, proving the check can catch a wrong gradient.
pub fn run(seed: u64, instances: usize, flip_gelu_derivative: bool) -> GradCheckReport {
    let names = ["w1", "b1", "w2", "b2", "inputs"];
    let mut max_err = [0.0f64; 5];

    for instance in 0..instances.max(1) {
        let mut rng = seeds::rng(seed, &[stream::GRADCHECK, instance as u64]);
        let d = rng.gen_range(2..=8usize);
        let hidden = rng.gen_range(2..=8usize);
        let k = rng.gen_range(2..=3usize);
        let n = rng.gen_range(1..=7usize);

        let mut params = init_params(d, hidden, k, &mut rng).expect("valid dims");
        // Nonzero biases so their gradients are exercised off the origin.
        for b in params.b1.iter_mut().chain(params.b2.iter_mut()) {
            *b = rng.gen_range(-0.5..0.5);
        }
        let mut xs = SequenceFeatures {
            n,
            dim: d,
            data: (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        };
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k) as u8).collect();

        let (probs, cache) = forward(&params, &xs).expect("valid shapes");
        let (_, dlogits) = seq_dice_ce_loss(&probs, &labels).expect("valid labels");
        let (grads, dinputs) = backward_impl(&params, &cache, &dlogits, flip_gelu_derivative);

        // Measure every coordinate of every tensor by central differences
        // of the end-to-end loss.
        macro_rules! check {
            ($which:expr, $slot:expr, $analytic:expr) => {
                for idx in 0..$analytic.len() {
                    let saved = $slot[idx];
                    $slot[idx] = saved + FD_STEP;
                    let up = loss_of(&params, &xs, &labels);
                    $slot[idx] = saved - FD_STEP;
                    let down = loss_of(&params, &xs, &labels);
                    $slot[idx] = saved;
                    let numeric = (up - down) / (2.0 * FD_STEP);
                    max_err[$which] = max_err[$which].max(rel_err($analytic[idx], numeric));
                }
            };
        }
        check!(0, params.w1, grads.w1);
        check!(1, params.b1, grads.b1);
        check!(2, params.w2, grads.w2);
        check!(3, params.b2, grads.b2);
        check!(4, xs.data, dinputs);
    }

    let tensors: Vec<TensorCheck> = names
        .iter()
        .zip(max_err.iter())
        .map(|(n, e)| TensorCheck { name: n.to_string(), max_rel_err: *e })
        .collect();
    let (worst_idx, worst) = max_err
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    GradCheckReport {
        instances: instances.max(1),
        tolerance: TOLERANCE,
        tensors,
        worst_tensor: names[worst_idx].to_string(),
        worst_rel_err: *worst,
        pass: *worst < TOLERANCE,
    }
}
