//! Deterministic synthetic lesion phantoms.
//!
//! Each slice is a star-convex blob whose angular domain is partitioned into
//! contiguous class bands; the rendered rim texture encodes the band class:
//!
//! * class 0 — continuous bright rim (peak 1.00);
//! * class 1 — medium rim (peak 0.80) with narrow faint gaps
//!   (15 degrees of every 60, attenuated to 0.45);
//! * class 2 — dimmer rim (peak 0.62) with wide near-absent gaps
//!   (30 degrees of every 60, attenuated to 0.06).
//!
//! Two deliberate obstacles keep the task from collapsing to a single
//! brightness threshold: the gap pattern is phase-locked to the absolute
//! angle (so positional inputs carry real information), and a multiplicative
//! illumination gradient `1 + 0.12*cos(theta + 0.7)` sweeps the rim (so raw
//! intensity is only decodable together with position or large-window
//! context). Patient-level binary outcome labels derive from the pooled
//! fraction of abnormal (class 1/2) vertices via a thresholded ratio with
//! optional label noise.
//!
//! Everything is a pure function of `(config, patient_seed, slice_index)`.

use crate::geometry::{to_polar, Point};
use crate::raster::{BinaryMask, GrayImage};
use crate::seeds::{self, stream};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Angular period of the rim gap pattern, degrees.
const GAP_PERIOD_DEG: f64 = 60.0;
/// Gap arc per period for class 1 (narrow) and class 2 (wide), degrees.
const GAP_ARC_DEG: [f64; 2] = [15.0, 30.0];
/// Rim attenuation inside a gap for class 1 (faint) and class 2 (absent).
const GAP_FACTOR: [f64; 2] = [0.45, 0.06];
/// Peak rim brightness per class.
const RIM_PEAK: [f64; 3] = [1.00, 0.80, 0.62];
/// Radial standard deviation of the rim profile, pixels.
const RIM_SIGMA_PX: f64 = 1.5;
/// Amplitude and phase of the multiplicative rim illumination gradient.
const ILLUM_AMPLITUDE: f64 = 0.12;
const ILLUM_PHASE_RAD: f64 = 0.7;
/// Flat intensity inside the lesion and in the background.
const INTERIOR_LEVEL: f64 = 0.22;
const BACKGROUND_LEVEL: f64 = 0.05;
/// Multipliers on the abnormal (class 1+2) prior mass for the two patient
/// archetypes; they average to 1 so the configured priors hold in
/// expectation while per-patient ratios spread away from the outcome
/// threshold.
const TILT_FACTORS: [f64; 2] = [0.4, 1.6];

/// Guaranteed separation between the mean intensity of a 7x7 window
/// centered on a class-0 boundary point and one centered on a class-2
/// boundary point of the same slice (worst-case illumination); the
/// generator's parameters were chosen to honor it and a unit test enforces
/// it on rendered slices.
pub const LEARNABILITY_MARGIN: f64 = 0.05;

/// Generator configuration. All fields are clamped into their documented
/// ranges by [`PhantomConfig::validated`], which every operation applies,
/// so construction never fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    /// Square image side, pixels (min 32).
    pub image_size: usize,
    /// Rays per slice for the ground-truth label sequence (min 4).
    pub n_vertices: usize,
    /// Class prevalence of the angular bands; normalized to sum 1.
    pub class_priors: [f64; 3],
    /// Inclusive range for the number of contiguous angular bands.
    pub band_count_range: [usize; 2],
    /// Mean lesion radius, pixels.
    pub radius_base: f64,
    /// Number of radius harmonics (orders 2, 3, ...; first order is skipped
    /// so the continuous shape keeps its centroid at the image center).
    pub harmonics: usize,
    /// Upper bound on the summed harmonic amplitudes (fraction of radius).
    pub amplitude_max: f64,
    /// Additive Gaussian intensity noise, standard deviation.
    pub noise_sigma: f64,
    /// Outcome rule: positive iff abnormal vertex fraction exceeds this.
    pub mvi_threshold: f64,
    /// Probability of flipping each patient's outcome label.
    pub mvi_flip_prob: f64,
    /// Generator seed; all randomness derives from it.
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            image_size: 64,
            n_vertices: 90,
            class_priors: [0.70, 0.15, 0.15],
            band_count_range: [3, 8],
            radius_base: 19.2,
            harmonics: 3,
            amplitude_max: 0.12,
            noise_sigma: 0.02,
            mvi_threshold: 0.30,
            mvi_flip_prob: 0.05,
            seed: 1,
        }
    }
}

impl PhantomConfig {
    /// Returns a copy with every field clamped into its valid range.
    pub fn validated(&self) -> PhantomConfig {
        let mut cfg = *self;
        cfg.image_size = cfg.image_size.max(32);
        cfg.n_vertices = cfg.n_vertices.max(4);
        let mut sum = 0.0;
        for p in cfg.class_priors.iter_mut() {
            if !p.is_finite() || *p < 0.0 {
                *p = 0.0;
            }
            sum += *p;
        }
        if sum <= 0.0 {
            cfg.class_priors = [1.0 / 3.0; 3];
        } else {
            for p in cfg.class_priors.iter_mut() {
                *p /= sum;
            }
        }
        cfg.band_count_range[0] = cfg.band_count_range[0].max(1);
        cfg.band_count_range[1] = cfg.band_count_range[1].max(cfg.band_count_range[0]);
        cfg.harmonics = cfg.harmonics.clamp(1, 4);
        cfg.amplitude_max = if cfg.amplitude_max.is_finite() {
            cfg.amplitude_max.clamp(0.0, 0.2)
        } else {
            0.12
        };
        // Keep the dilated shape plus the rim falloff inside the frame.
        let max_fit = cfg.image_size as f64 / 2.0 - 6.0;
        cfg.radius_base = if cfg.radius_base.is_finite() {
            cfg.radius_base.clamp(6.0, max_fit)
        } else {
            (0.3 * cfg.image_size as f64).min(max_fit)
        };
        cfg.noise_sigma = if cfg.noise_sigma.is_finite() { cfg.noise_sigma.max(0.0) } else { 0.0 };
        cfg.mvi_threshold = if cfg.mvi_threshold.is_finite() { cfg.mvi_threshold.clamp(0.0, 1.0) } else { 0.3 };
        cfg.mvi_flip_prob = if cfg.mvi_flip_prob.is_finite() { cfg.mvi_flip_prob.clamp(0.0, 1.0) } else { 0.0 };
        cfg
    }
}

/// Piecewise-constant map from angle (degrees in `[0, 360)`) to class.
///
/// Band `i` covers `[starts[i], starts[i+1])`; the last band wraps through
/// 360 back to `starts[0]`. `starts` is sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleBands {
    pub starts: Vec<f64>,
    pub classes: Vec<u8>,
}

impl AngleBands {
    /// Class at `theta_deg` (any real angle; reduced mod 360).
    pub fn class_at(&self, theta_deg: f64) -> u8 {
        if self.starts.is_empty() {
            return 0;
        }
        let t = theta_deg.rem_euclid(360.0);
        let p = self.starts.partition_point(|s| *s <= t);
        if p == 0 {
            self.classes[self.classes.len() - 1]
        } else {
            self.classes[p - 1]
        }
    }
}

/// One generated slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSlice {
    pub image: GrayImage,
    pub mask: BinaryMask,
    /// Angle -> class map the rim texture was rendered from.
    pub gt_angle_labels: AngleBands,
    /// Class at each ray angle `k * 360/N`.
    pub gt_label_sequence: Vec<u8>,
    pub patient_id: u64,
    pub slice_index: usize,
}

/// All slices of one patient plus the binary outcome label.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub patient_id: u64,
    pub slices: Vec<PhantomSlice>,
    pub mvi_label: u8,
}

/// Scales the abnormal (class 1+2) prior mass by the archetype factor,
/// preserving the class-1:class-2 split. The two archetypes average back to
/// the configured priors when no clamping occurs.
fn tilt_priors(priors: [f64; 3], invaded: bool) -> [f64; 3] {
    let q = priors[1] + priors[2];
    if q <= 0.0 || q >= 1.0 {
        return priors;
    }
    let factor = if invaded { TILT_FACTORS[1] } else { TILT_FACTORS[0] };
    let q_new = (q * factor).clamp(0.0, 1.0);
    [1.0 - q_new, priors[1] * q_new / q, priors[2] * q_new / q]
}

fn sample_class(priors: &[f64; 3], rng: &mut impl Rng) -> u8 {
    let u: f64 = rng.gen_range(0.0..1.0);
    if u < priors[0] {
        0
    } else if u < priors[0] + priors[1] {
        1
    } else {
        2
    }
}

/// One standard normal via the Box-Muller transform. Hand-rolled so the
/// generated bytes are pinned by this crate alone rather than by the
/// internals of an external sampler.
fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]: keeps the log finite
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Rim gap attenuation at `theta_deg` for the given class. The pattern is a
/// function of the absolute angle, shared by all slices.
fn gap_factor(theta_deg: f64, class: u8) -> f64 {
    if class == 0 {
        return 1.0;
    }
    let phase = theta_deg.rem_euclid(GAP_PERIOD_DEG);
    let idx = class as usize - 1;
    if phase < GAP_ARC_DEG[idx] {
        GAP_FACTOR[idx]
    } else {
        1.0
    }
}

/// Generates one slice; pure in `(cfg, patient_seed, slice_index)`.
pub fn generate_slice(cfg: &PhantomConfig, patient_seed: u64, slice_index: usize) -> PhantomSlice {
    let cfg = cfg.validated();
    let size = cfg.image_size;

    // Patient archetype: abnormal-lean or intact-lean band priors.
    let invaded = seeds::rng(cfg.seed, &[stream::PHANTOM_PATIENT, patient_seed]).gen_bool(0.5);
    let priors = tilt_priors(cfg.class_priors, invaded);

    let mut shape_rng = seeds::rng(cfg.seed, &[stream::PHANTOM_SHAPE, patient_seed, slice_index as u64]);

    // Radius harmonics of orders 2..: amplitudes scaled to a random total
    // within the configured bound, phases uniform.
    let mut amps = vec![0.0f64; cfg.harmonics];
    let mut phases = vec![0.0f64; cfg.harmonics];
    let mut raw_total = 0.0;
    for a in amps.iter_mut() {
        *a = shape_rng.gen_range(0.0..1.0);
        raw_total += *a;
    }
    let budget = cfg.amplitude_max * shape_rng.gen_range(0.3..1.0);
    if raw_total > 0.0 {
        for a in amps.iter_mut() {
            *a *= budget / raw_total;
        }
    }
    for p in phases.iter_mut() {
        *p = shape_rng.gen_range(0.0..std::f64::consts::TAU);
    }
    let radius_at = |theta_rad: f64| -> f64 {
        let mut r = 1.0;
        for (j, (&a, &p)) in amps.iter().zip(phases.iter()).enumerate() {
            r += a * ((j as f64 + 2.0) * theta_rad + p).cos();
        }
        cfg.radius_base * r
    };

    // Contiguous angular class bands from sorted uniform cuts.
    let n_bands = shape_rng.gen_range(cfg.band_count_range[0]..=cfg.band_count_range[1]);
    let mut starts: Vec<f64> = (0..n_bands).map(|_| shape_rng.gen_range(0.0..360.0)).collect();
    starts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    starts.dedup();
    let classes: Vec<u8> = (0..starts.len()).map(|_| sample_class(&priors, &mut shape_rng)).collect();
    let bands = AngleBands { starts, classes };

    // Render: flat base, Gaussian radial rim modulated by class pattern and
    // illumination, then per-pixel noise in row-major order.
    let center = Point { x: (size as f64 - 1.0) / 2.0, y: (size as f64 - 1.0) / 2.0 };
    let mut mask = BinaryMask::new(size, size);
    let mut image = GrayImage::new(size, size);
    let mut noise_rng = seeds::rng(cfg.seed, &[stream::PHANTOM_NOISE, patient_seed, slice_index as u64]);
    for y in 0..size {
        for x in 0..size {
            let pp = to_polar(Point { x: x as f64, y: y as f64 }, center);
            let theta_rad = pp.theta_deg.to_radians();
            let r_boundary = radius_at(theta_rad);
            let inside = pp.r <= r_boundary;
            mask.set(x, y, inside);

            let class = bands.class_at(pp.theta_deg);
            let illum = 1.0 + ILLUM_AMPLITUDE * (theta_rad + ILLUM_PHASE_RAD).cos();
            let radial = (-(pp.r - r_boundary).powi(2) / (2.0 * RIM_SIGMA_PX * RIM_SIGMA_PX)).exp();
            let rim = illum * RIM_PEAK[class as usize] * gap_factor(pp.theta_deg, class) * radial;
            let base = if inside { INTERIOR_LEVEL } else { BACKGROUND_LEVEL };
            let value = base + rim + cfg.noise_sigma * standard_normal(&mut noise_rng);
            image.set(x, y, value as f32);
        }
    }

    let delta = 360.0 / cfg.n_vertices as f64;
    let gt_label_sequence: Vec<u8> =
        (0..cfg.n_vertices).map(|k| bands.class_at(k as f64 * delta)).collect();

    PhantomSlice {
        image,
        mask,
        gt_angle_labels: bands,
        gt_label_sequence,
        patient_id: patient_seed,
        slice_index,
    }
}

/// Pooled fraction of abnormal (class 1/2) vertices across slices.
pub fn abnormal_ratio(slices: &[PhantomSlice]) -> f64 {
    let mut abnormal = 0usize;
    let mut total = 0usize;
    for s in slices {
        total += s.gt_label_sequence.len();
        abnormal += s.gt_label_sequence.iter().filter(|&&c| c != 0).count();
    }
    if total == 0 {
        0.0
    } else {
        abnormal as f64 / total as f64
    }
}

/// Generates patients with the given per-patient slice counts (each clamped
/// to at least 1). Patient `p` uses `patient_seed = p`.
pub fn generate_cohort_with_counts(cfg: &PhantomConfig, counts: &[usize]) -> Vec<PatientRecord> {
    let cfg = cfg.validated();
    let mut records = Vec::with_capacity(counts.len());
    for (p, &count) in counts.iter().enumerate() {
        let p = p as u64;
        let slices: Vec<PhantomSlice> =
            (0..count.max(1)).map(|i| generate_slice(&cfg, p, i)).collect();
        let ratio = abnormal_ratio(&slices);
        let mut label = ratio > cfg.mvi_threshold;
        if seeds::rng(cfg.seed, &[stream::PHANTOM_FLIP, p]).gen_bool(cfg.mvi_flip_prob) {
            label = !label;
        }
        records.push(PatientRecord { patient_id: p, slices, mvi_label: label as u8 });
    }
    records
}

/// Generates a cohort with per-patient slice counts drawn uniformly from
/// the inclusive interval `slices_per_patient`.
pub fn generate_cohort(
    cfg: &PhantomConfig,
    n_patients: usize,
    slices_per_patient: [usize; 2],
) -> Vec<PatientRecord> {
    let cfg = cfg.validated();
    let lo = slices_per_patient[0].max(1);
    let hi = slices_per_patient[1].max(lo);
    let counts: Vec<usize> = (0..n_patients)
        .map(|p| seeds::rng(cfg.seed, &[stream::PHANTOM_SLICE_COUNT, p as u64]).gen_range(lo..=hi))
        .collect();
    generate_cohort_with_counts(&cfg, &counts)
}
