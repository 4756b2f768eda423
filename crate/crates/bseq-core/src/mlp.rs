//! Per-vertex classifier: a two-layer MLP with an exact GELU nonlinearity
//! and a softmax head, plus hand-written reverse-mode gradients.
//!
//! Shapes follow the feature pipeline: input rows of dimension `d`, one
//! hidden layer of width `hidden`, `k` output classes. Weight matrices are
//! stored row-major as `w1[d][hidden]` and `w2[hidden][k]`, applied as
//! `z = w1^T x + b1`, `logits = w2^T gelu(z) + b2`.

use crate::features::SequenceFeatures;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MlpError {
    #[error("feature dimension {0} does not match model input dimension {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid model dimensions d={0}, hidden={1}, k={2}")]
    InvalidDims(usize, usize, usize),
}

/// Trainable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub d: usize,
    pub hidden: usize,
    pub k: usize,
    /// `d x hidden`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `hidden x k`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Gradients with the same shapes as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpGrads {
    pub fn zeros(p: &MlpParams) -> Self {
        MlpGrads {
            w1: vec![0.0; p.w1.len()],
            b1: vec![0.0; p.b1.len()],
            w2: vec![0.0; p.w2.len()],
            b2: vec![0.0; p.b2.len()],
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.w1.iter_mut().chain(&mut self.b1).chain(&mut self.w2).chain(&mut self.b2) {
            *v *= s;
        }
    }

    pub fn add(&mut self, other: &MlpGrads) {
        for (a, b) in self
            .w1
            .iter_mut()
            .chain(&mut self.b1)
            .chain(&mut self.w2)
            .chain(&mut self.b2)
            .zip(other.w1.iter().chain(&other.b1).chain(&other.w2).chain(&other.b2))
        {
            *a += b;
        }
    }
}

/// Per-row class probabilities, `probs[row * k + class]`, each row summing
/// to 1 with strictly positive entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbSequence {
    pub n: usize,
    pub k: usize,
    pub probs: Vec<f64>,
}

impl ClassProbSequence {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.k..(i + 1) * self.k]
    }

    /// Argmax class per row; exact ties resolve to the smaller class index.
    pub fn argmax(&self) -> Vec<u8> {
        (0..self.n)
            .map(|i| {
                let row = self.row(i);
                let mut best = 0usize;
                for c in 1..self.k {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect()
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub n: usize,
    /// Input rows, `n x d`.
    pub inputs: Vec<f64>,
    /// Pre-activations `w1^T x + b1`, `n x hidden`.
    pub z: Vec<f64>,
    /// Hidden activations `gelu(z)`, `n x hidden`.
    pub h: Vec<f64>,
    /// Output logits, `n x k`.
    pub logits: Vec<f64>,
}

/// Exact GELU: `0.5 x (1 + erf(x / sqrt(2)))`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// Derivative of the exact GELU: `Phi(x) + x * phi(x)` with the standard
/// normal CDF/PDF.
pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

/// Numerically stabilized softmax over one row (max subtraction).
pub fn softmax_row(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Glorot-style uniform initialization `U(-a, a)`, `a = sqrt(6/(fan_in +
/// fan_out))`, drawn in a fixed order so a seed pins the parameters.
pub fn init_params<R: Rng>(d: usize, hidden: usize, k: usize, rng: &mut R) -> Result<MlpParams, MlpError> {
    if d == 0 || hidden == 0 || k < 2 {
        return Err(MlpError::InvalidDims(d, hidden, k));
    }
    let mut draw = |fan_in: usize, fan_out: usize, len: usize| -> Vec<f64> {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        (0..len).map(|_| rng.gen_range(-a..a)).collect()
    };
    let w1 = draw(d, hidden, d * hidden);
    let w2 = draw(hidden, k, hidden * k);
    Ok(MlpParams { d, hidden, k, w1, b1: vec![0.0; hidden], w2, b2: vec![0.0; k] })
}

/// Forward pass over a feature sequence; returns row-wise class
/// probabilities plus the cache for [`backward`].
pub fn forward(params: &MlpParams, xs: &SequenceFeatures) -> Result<(ClassProbSequence, ForwardCache), MlpError> {
    if xs.dim != params.d {
        return Err(MlpError::DimensionMismatch(xs.dim, params.d));
    }
    let (n, hd, k) = (xs.n, params.hidden, params.k);
    let mut z = vec![0.0; n * hd];
    let mut h = vec![0.0; n * hd];
    let mut logits = vec![0.0; n * k];
    let mut probs = vec![0.0; n * k];
    for i in 0..n {
        let x = xs.row(i);
        let zi = &mut z[i * hd..(i + 1) * hd];
        zi.copy_from_slice(&params.b1);
        for (a, &xv) in x.iter().enumerate() {
            let wrow = &params.w1[a * hd..(a + 1) * hd];
            for j in 0..hd {
                zi[j] += xv * wrow[j];
            }
        }
        let hi = &mut h[i * hd..(i + 1) * hd];
        for j in 0..hd {
            hi[j] = gelu(zi[j]);
        }
        let li = &mut logits[i * k..(i + 1) * k];
        li.copy_from_slice(&params.b2);
        for (j, &hv) in hi.iter().enumerate() {
            let wrow = &params.w2[j * k..(j + 1) * k];
            for c in 0..k {
                li[c] += hv * wrow[c];
            }
        }
        softmax_row(li, &mut probs[i * k..(i + 1) * k]);
    }
    Ok((
        ClassProbSequence { n, k, probs },
        ForwardCache { n, inputs: xs.data.clone(), z, h, logits },
    ))
}

/// Reverse-mode pass from logit gradients to parameter and input gradients.
/// `dlogits` is `n x k` (the loss has already absorbed the softmax
/// Jacobian). Returns the summed parameter gradients and per-row input
/// gradients (`n x d`).
pub fn backward(params: &MlpParams, cache: &ForwardCache, dlogits: &[f64]) -> (MlpGrads, Vec<f64>) {
    backward_impl(params, cache, dlogits, false)
}

/// Implementation detail shared with the gradient-check fault-injection
/// hook. `flip_gelu_derivative` negates the GELU derivative to verify the
/// checker actually catches analytic-gradient bugs.
pub(crate) fn backward_impl(
    params: &MlpParams,
    cache: &ForwardCache,
    dlogits: &[f64],
    flip_gelu_derivative: bool,
) -> (MlpGrads, Vec<f64>) {
    let (n, d, hd, k) = (cache.n, params.d, params.hidden, params.k);
    assert_eq!(dlogits.len(), n * k, "dlogits shape");
    let mut grads = MlpGrads::zeros(params);
    let mut dinputs = vec![0.0; n * d];
    let mut dh = vec![0.0; hd];
    for i in 0..n {
        let x = &cache.inputs[i * d..(i + 1) * d];
        let zi = &cache.z[i * hd..(i + 1) * hd];
        let hi = &cache.h[i * hd..(i + 1) * hd];
        let dl = &dlogits[i * k..(i + 1) * k];

        // Output layer: dW2 += h dl^T, db2 += dl, dh = W2 dl.
        for j in 0..hd {
            let wrow = &params.w2[j * k..(j + 1) * k];
            let grow = &mut grads.w2[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for c in 0..k {
                grow[c] += hi[j] * dl[c];
                acc += wrow[c] * dl[c];
            }
            dh[j] = acc;
        }
        for c in 0..k {
            grads.b2[c] += dl[c];
        }

        // Through the nonlinearity: dz = dh * gelu'(z).
        let sign = if flip_gelu_derivative { -1.0 } else { 1.0 };
        let dz: Vec<f64> =
            (0..hd).map(|j| dh[j] * sign * gelu_derivative(zi[j])).collect();

        // Input layer: dW1 += x dz^T, db1 += dz, dx = W1 dz.
        for a in 0..d {
            let wrow = &params.w1[a * hd..(a + 1) * hd];
            let grow = &mut grads.w1[a * hd..(a + 1) * hd];
            let mut acc = 0.0;
            for j in 0..hd {
                grow[j] += x[a] * dz[j];
                acc += wrow[j] * dz[j];
            }
            dinputs[i * d + a] = acc;
        }
        for j in 0..hd {
            grads.b1[j] += dz[j];
        }
    }
    (grads, dinputs)
}
