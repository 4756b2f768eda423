//! Core library for boundary-sequence semantics on synthetic lesion phantoms.
//!
//! The pipeline turns a binary lesion mask and its grayscale image into a
//! polar sequence of boundary vertices, attaches multi-scale appearance
//! features to every vertex, classifies the vertices with a small trainable
//! MLP, and finally pools the per-vertex classes into patient-level ratio
//! biomarkers for a downstream logistic-regression study.
//!
//! Modules mirror the pipeline stages:
//!
//! * [`raster`] — owned grayscale image and binary mask buffers.
//! * [`phantom`] — synthetic star-convex lesion generator with per-class rim
//!   appearance and patient-level outcome labels.
//! * [`geometry`] — boundary extraction, polar transforms, ray binning, and
//!   vertex generation.
//! * [`features`] — fixed (non-learned) multi-scale feature pyramid, merged
//!   grid with coordinate channels, and bilinear vertex sampling.
//! * [`mlp`] — two-layer GELU/softmax classifier with exact reverse-mode
//!   gradients.
//! * [`training`] — sequence dice + cross-entropy loss, SGD with momentum,
//!   and the slice-level training loop.
//! * [`metrics`] — confusion-matrix sequence metrics, rank AUC, and mask DSC.
//! * [`biomarker`] — class-ratio pooling and the weighted logistic-regression
//!   outcome model tuned by Youden's J.
//! * [`gradcheck`] — finite-difference verification harness for the analytic
//!   gradients.
//! * [`seeds`] — deterministic seed derivation for every random decision.

// Indexed loops are kept where they mirror row-major index math across
// several parallel buffers; iterator chains there would hide the layout.
#![allow(clippy::needless_range_loop)]

pub mod biomarker;
pub mod features;
pub mod geometry;
pub mod gradcheck;
pub mod metrics;
pub mod mlp;
pub mod phantom;
pub mod raster;
pub mod seeds;
pub mod training;
