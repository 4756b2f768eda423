//! The six subcommand drivers: dataset generation, training, evaluation,
//! overlay rendering, the patient-outcome study, and the gradient check.
//!
//! Every command is a pure function of its flags: the same invocation
//! produces byte-identical output files (reports carry no timestamps, and
//! all randomness flows from explicit seeds).

use crate::error::CliError;
use crate::formats::{
    self, manifest_path, BiomarkerReport, Checkpoint, ClassBreakdown, EvalReport, Manifest,
    OutcomeRow, PercentMetrics, RowMetrics, SliceEntry, Split, SplitSpec, FORMAT_VERSION,
};
use crate::render;
use bseq_core::biomarker::{
    self, default_threshold_grid, patient_biomarker, tune_youden, ProgMetrics,
    DEFAULT_WEIGHT_GRID,
};
use bseq_core::features::FeatureOptions;
use bseq_core::mlp::ClassProbSequence;
use bseq_core::phantom::{generate_cohort_with_counts, PhantomConfig};
use bseq_core::training::{predict_slice, train, MaskSource, PipelineConfig, TrainSlice};
use bseq_core::{geometry, gradcheck, metrics, seeds};
use clap::{Args, Parser, Subcommand};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

/// Boundary-semantics pipeline: synthetic data, vertex classifier training,
/// evaluation, overlays, and the downstream patient-outcome study.
#[derive(Debug, Parser)]
#[command(name = "bseq", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic lesion dataset with per-ray class labels.
    Gen(GenArgs),
    /// Train the per-vertex classifier and write a checkpoint + history.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split and write a metrics report.
    Eval(EvalArgs),
    /// Render one slice's predicted boundary semantics as SVG (and PPM).
    Infer(InferArgs),
    /// Fit and evaluate the patient-outcome model on class-ratio features.
    Biomarker(BiomarkerArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Biomarker(args) => cmd_biomarker(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}

fn data_err(e: impl Display) -> CliError {
    CliError::Data(e.to_string())
}

/// Writes one line to stdout. A closed pipe (the consumer stopped reading)
/// ends the process quietly instead of panicking; other write errors are
/// reported on stderr and exit with the data-error code.
fn emit(line: impl Display) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = writeln!(out, "{line}") {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write to stdout: {e}");
        std::process::exit(CliError::Data(String::new()).exit_code());
    }
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Slices assigned to the training split.
    #[arg(long, default_value_t = 0)]
    pub train: usize,
    /// Slices assigned to the validation split.
    #[arg(long, default_value_t = 0)]
    pub val: usize,
    /// Slices assigned to the test split.
    #[arg(long, default_value_t = 0)]
    pub test: usize,
    /// Number of patients; slices are spread as evenly as possible.
    /// Defaults to one patient per slice.
    #[arg(long)]
    pub patients: Option<usize>,
    /// Generator seed; all randomness derives from it.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Square image side in pixels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Rays (and labels) per slice.
    #[arg(long, default_value_t = 90)]
    pub n_vertices: usize,
    /// Mean lesion radius in pixels. Defaults to 0.3 x size.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Additive Gaussian intensity noise, standard deviation.
    #[arg(long, default_value_t = 0.02)]
    pub noise_sigma: f64,
    /// Outcome label is positive iff the abnormal vertex fraction exceeds
    /// this threshold.
    #[arg(long, default_value_t = 0.30)]
    pub mvi_threshold: f64,
    /// Probability of flipping each patient's outcome label.
    #[arg(long, default_value_t = 0.05)]
    pub mvi_flip_prob: f64,
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let total = args.train + args.val + args.test;
    if total == 0 {
        return Err(CliError::Usage(
            "--train, --val and --test sum to 0; nothing to generate".to_string(),
        ));
    }
    let patients = args.patients.unwrap_or(total);
    if patients == 0 {
        return Err(CliError::Usage("--patients must be at least 1".to_string()));
    }
    if patients > total {
        return Err(CliError::Usage(format!(
            "--patients {patients} exceeds the {total} requested slices; every patient needs at least one slice"
        )));
    }
    // Spread slices over patients as evenly as possible: the first
    // `total % patients` patients take one extra.
    let base = total / patients;
    let rem = total % patients;
    let counts: Vec<usize> = (0..patients).map(|p| base + usize::from(p < rem)).collect();

    let cfg = PhantomConfig {
        image_size: args.size,
        n_vertices: args.n_vertices,
        radius_base: args.radius.unwrap_or(0.3 * args.size as f64),
        noise_sigma: args.noise_sigma,
        mvi_threshold: args.mvi_threshold,
        mvi_flip_prob: args.mvi_flip_prob,
        seed: args.seed,
        ..PhantomConfig::default()
    };
    let records = generate_cohort_with_counts(&cfg, &counts);
    let manifest = formats::write_dataset(
        &records,
        &cfg,
        SplitSpec::Counts([args.train, args.val, args.test]),
        &args.out,
    )?;
    emit(manifest.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (or manifest path).
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoint.json and history.jsonl.
    #[arg(long, default_value = "model")]
    pub out: PathBuf,
    /// Training epochs. 0 writes a checkpoint of the initial parameters.
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    /// SGD learning rate.
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// SGD momentum coefficient.
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// L2 weight decay added to the gradient.
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    /// Mini-batch size in slices.
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Hidden layer width.
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// Seed for initialization, shuffling, and vertex sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Must match the dataset's rays per slice when given.
    #[arg(long)]
    pub n_vertices: Option<usize>,
    /// Drop the multi-scale pyramid; use only the finest-scale features
    /// (changes the input dimension).
    #[arg(long)]
    pub no_pyrafeat: bool,
    /// Zero the two coordinate channels (keeps the input dimension).
    #[arg(long)]
    pub no_coordpos: bool,
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let manifest_file = manifest_path(&args.data);
    let manifest = Manifest::load(&manifest_file)?;
    let dir = manifest_dir(&manifest_file);
    if let Some(n) = args.n_vertices {
        if n != manifest.n_vertices {
            return Err(CliError::Data(format!(
                "--n-vertices {n} does not match the dataset's {} rays per slice; \
                 regenerate the dataset to train at a different density",
                manifest.n_vertices
            )));
        }
    }

    let features =
        FeatureOptions { use_pyramid: !args.no_pyrafeat, use_coord_map: !args.no_coordpos };
    let pipe = PipelineConfig {
        n_vertices: manifest.n_vertices,
        hidden: args.hidden,
        classes: 3,
        features,
    };
    let sgd = bseq_core::training::SgdConfig {
        lr: args.lr,
        momentum: args.momentum,
        weight_decay: args.weight_decay,
        batch_size: args.batch_size,
        epochs: args.epochs,
    };

    let mut train_slices = Vec::new();
    let mut val_slices = Vec::new();
    for entry in &manifest.slices {
        let bucket = match entry.split {
            Split::Train => &mut train_slices,
            Split::Val => &mut val_slices,
            Split::Test => continue,
        };
        let (image, mask) = formats::load_slice_data(&dir, &manifest.phantom_config, entry)?;
        bucket.push(TrainSlice { image, mask, labels: entry.labels.clone() });
    }

    let outcome = train(&train_slices, &val_slices, &pipe, &sgd, args.seed).map_err(data_err)?;

    fs::create_dir_all(&args.out).map_err(|e| CliError::io("creating", &args.out, e))?;
    let checkpoint = Checkpoint::from_params(
        &outcome.best_params,
        features,
        manifest.n_vertices,
        sgd,
        args.seed,
        outcome.history.best_epoch,
    );
    let ckpt_path = args.out.join("checkpoint.json");
    checkpoint.save(&ckpt_path)?;
    formats::save_history(&args.out.join("history.jsonl"), &outcome.history.epochs)?;

    emit(ckpt_path.display());
    if let Some(best) = outcome.history.epochs.get(outcome.history.best_epoch) {
        emit(format_args!(
            "epochs {} best_epoch {} val_macro_f1 {:.4}",
            outcome.history.epochs.len(),
            outcome.history.best_epoch,
            best.val_macro_f1
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset directory (or manifest path).
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub model: PathBuf,
    /// Split to evaluate: train | val | test.
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Write the report JSON here (it is always printed to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Perturb each mask boundary by up to this many pixels before
    /// inference (0 evaluates the ground-truth masks).
    #[arg(long, default_value_t = 0.0)]
    pub perturb: f64,
    /// Seed for the perturbation draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluate at a different ray density (labels are recomputed from the
    /// dataset's angular bands).
    #[arg(long)]
    pub n_vertices: Option<usize>,
    /// Restrict features to the finest scale. Only valid with a checkpoint
    /// trained the same way, since it changes the input dimension.
    #[arg(long)]
    pub no_pyrafeat: bool,
    /// Zero the coordinate channels at inference time.
    #[arg(long)]
    pub no_coordpos: bool,
}

/// Ground-truth classes for `n` rays at angles `i * 360/n`, recomputed from
/// the slice's angular bands when `n` differs from the stored sequence.
fn labels_at_density(entry: &SliceEntry, n: usize) -> Vec<u8> {
    if n == entry.n {
        return entry.labels.clone();
    }
    (0..n).map(|i| entry.angle_bands.class_at(i as f64 * 360.0 / n as f64)).collect()
}

fn manifest_dir(manifest_file: &Path) -> PathBuf {
    let parent = manifest_file.parent().unwrap_or(Path::new("."));
    if parent.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        parent.to_path_buf()
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let manifest_file = manifest_path(&args.data);
    let manifest = Manifest::load(&manifest_file)?;
    let dir = manifest_dir(&manifest_file);
    let checkpoint = Checkpoint::load(&args.model)?;

    let effective = FeatureOptions {
        use_pyramid: checkpoint.features.use_pyramid && !args.no_pyrafeat,
        use_coord_map: checkpoint.features.use_coord_map && !args.no_coordpos,
    };
    if effective.feature_dim() != checkpoint.dims.d {
        return Err(CliError::Data(format!(
            "these feature options produce {}-dim inputs but the checkpoint expects {}; \
             --no-pyrafeat changes the input size and needs a checkpoint trained with it",
            effective.feature_dim(),
            checkpoint.dims.d
        )));
    }
    let n = args.n_vertices.unwrap_or(manifest.n_vertices);
    if n < 4 {
        return Err(CliError::Usage(format!("--n-vertices {n} is below the minimum of 4")));
    }
    let params = checkpoint.to_params()?;
    let pipe = PipelineConfig {
        n_vertices: n,
        hidden: checkpoint.dims.hidden,
        classes: checkpoint.dims.k,
        features: effective,
    };
    let k = checkpoint.dims.k;

    let entries: Vec<&SliceEntry> =
        manifest.slices.iter().filter(|e| e.split == args.split).collect();
    if entries.is_empty() {
        return Err(CliError::Data(format!("split '{}' has no slices", args.split)));
    }

    let mut preds: Vec<u8> = Vec::with_capacity(entries.len() * n);
    let mut gts: Vec<u8> = Vec::with_capacity(entries.len() * n);
    let mut probs: Vec<f64> = Vec::with_capacity(entries.len() * n * k);
    let mut dsc_sum = 0.0;
    for entry in &entries {
        let (image, mask) = formats::load_slice_data(&dir, &manifest.phantom_config, entry)?;
        let source = if args.perturb > 0.0 {
            MaskSource::Perturbed {
                magnitude: args.perturb,
                seed: seeds::mix(args.seed, &[entry.patient_id, entry.slice_index as u64]),
            }
        } else {
            MaskSource::GroundTruth
        };
        let pred = predict_slice(&params, &image, &mask, &pipe, source).map_err(data_err)?;
        dsc_sum += metrics::dsc(&pred.mask_used, &mask).map_err(data_err)?;
        gts.extend(labels_at_density(entry, n));
        preds.extend(pred.classes);
        probs.extend(pred.probs.probs);
    }

    let pooled = ClassProbSequence { n: preds.len(), k, probs };
    let pooled_metrics = metrics::seq_metrics(&preds, &gts, k, Some(&pooled)).map_err(data_err)?;
    let confusion = metrics::confusion(&preds, &gts, k).map_err(data_err)?;
    let per_class = (0..k)
        .map(|c| {
            let tp = confusion[c][c];
            let pred_c: usize = (0..k).map(|g| confusion[g][c]).sum();
            let true_c: usize = confusion[c].iter().sum();
            let precision = if pred_c == 0 { 0.0 } else { tp as f64 / pred_c as f64 };
            let recall = if true_c == 0 { 0.0 } else { tp as f64 / true_c as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassBreakdown {
                class: c,
                precision: formats::percent(precision),
                recall: formats::percent(recall),
                f1: formats::percent(f1),
                support: true_c,
            }
        })
        .collect();

    let report = EvalReport {
        format_version: FORMAT_VERSION.to_string(),
        split: args.split,
        n_slices: entries.len(),
        n_vertices: n,
        perturb: args.perturb,
        seed: args.seed,
        features: effective,
        metrics: PercentMetrics {
            precision: formats::percent(pooled_metrics.precision),
            recall: formats::percent(pooled_metrics.recall),
            f1: formats::percent(pooled_metrics.f1),
            accuracy: formats::percent(pooled_metrics.accuracy),
            auc: pooled_metrics.auc.map(formats::percent),
        },
        per_class,
        dsc: formats::percent(dsc_sum / entries.len() as f64),
    };
    if let Some(out) = &args.out {
        report.save(out)?;
    }
    emit(serde_json::to_string_pretty(&report).expect("serializable report"));
    Ok(())
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Dataset directory (or manifest path).
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub model: PathBuf,
    /// Patient id of the slice to render.
    #[arg(long)]
    pub patient: u64,
    /// Slice index within the patient.
    #[arg(long)]
    pub slice: usize,
    /// Output SVG path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also dump the raw grayscale image as binary PPM here.
    #[arg(long)]
    pub ppm: Option<PathBuf>,
}

fn cmd_infer(args: InferArgs) -> Result<(), CliError> {
    let manifest_file = manifest_path(&args.data);
    let manifest = Manifest::load(&manifest_file)?;
    let dir = manifest_dir(&manifest_file);
    let checkpoint = Checkpoint::load(&args.model)?;
    let params = checkpoint.to_params()?;

    let entry = manifest
        .slices
        .iter()
        .find(|e| e.patient_id == args.patient && e.slice_index == args.slice)
        .ok_or_else(|| {
            CliError::Data(format!(
                "dataset has no slice {} for patient {}",
                args.slice, args.patient
            ))
        })?;
    let (image, mask) = formats::load_slice_data(&dir, &manifest.phantom_config, entry)?;
    let pipe = PipelineConfig {
        n_vertices: manifest.n_vertices,
        hidden: checkpoint.dims.hidden,
        classes: checkpoint.dims.k,
        features: checkpoint.features,
    };
    let pred =
        predict_slice(&params, &image, &mask, &pipe, MaskSource::GroundTruth).map_err(data_err)?;
    let pole = geometry::centroid(&mask).map_err(data_err)?;
    let size = manifest.phantom_config.validated().image_size;
    let svg = render::svg_overlay(size, pole, &pred.vertices, &pred.classes, &entry.labels);
    formats::write_atomic(&args.out, svg.as_bytes())?;
    if let Some(ppm) = &args.ppm {
        formats::write_atomic(ppm, &render::ppm_p6(&image))?;
    }
    emit(args.out.display());
    if let Some(ppm) = &args.ppm {
        emit(ppm.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// biomarker
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct BiomarkerArgs {
    /// Dataset directory (or manifest path).
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path (used for the prediction row).
    #[arg(long)]
    pub model: PathBuf,
    /// Write the report JSON here (it is always printed to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Gradient-descent iterations per weight-grid candidate.
    #[arg(long, default_value_t = 5000)]
    pub iterations: usize,
    /// Gradient-descent learning rate.
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
}

struct PatientAgg {
    label: u8,
    holdout: bool,
    gt_sequences: Vec<Vec<u8>>,
    pred_sequences: Vec<Vec<u8>>,
}

fn class_counts<'a>(patients: impl Iterator<Item = &'a PatientAgg>) -> [usize; 2] {
    let mut counts = [0usize; 2];
    for p in patients {
        counts[usize::from(p.label == 1)] += 1;
    }
    counts
}

fn row_metrics(m: &ProgMetrics) -> RowMetrics {
    RowMetrics { sensitivity: m.sensitivity, specificity: m.specificity, auc: m.auc, j: m.j }
}

fn cmd_biomarker(args: BiomarkerArgs) -> Result<(), CliError> {
    let manifest_file = manifest_path(&args.data);
    let manifest = Manifest::load(&manifest_file)?;
    let dir = manifest_dir(&manifest_file);
    let checkpoint = Checkpoint::load(&args.model)?;
    let params = checkpoint.to_params()?;
    let pipe = PipelineConfig {
        n_vertices: manifest.n_vertices,
        hidden: checkpoint.dims.hidden,
        classes: checkpoint.dims.k,
        features: checkpoint.features,
    };

    // Pool every slice of each patient; a patient is held out iff any of
    // its slices belongs to the test split.
    let mut patients: Vec<PatientAgg> = Vec::with_capacity(manifest.patients.len());
    for patient in &manifest.patients {
        let mut agg = PatientAgg {
            label: patient.mvi_label,
            holdout: false,
            gt_sequences: Vec::new(),
            pred_sequences: Vec::new(),
        };
        for entry in manifest.slices.iter().filter(|e| e.patient_id == patient.patient_id) {
            let (image, mask) = formats::load_slice_data(&dir, &manifest.phantom_config, entry)?;
            let pred = predict_slice(&params, &image, &mask, &pipe, MaskSource::GroundTruth)
                .map_err(data_err)?;
            agg.holdout |= entry.split == Split::Test;
            agg.gt_sequences.push(entry.labels.clone());
            agg.pred_sequences.push(pred.classes);
        }
        if agg.gt_sequences.is_empty() {
            return Err(CliError::Data(format!(
                "patient {} has no slices in the manifest",
                patient.patient_id
            )));
        }
        patients.push(agg);
    }

    let fit_counts = class_counts(patients.iter().filter(|p| !p.holdout));
    let holdout_counts = class_counts(patients.iter().filter(|p| p.holdout));
    if fit_counts[0] < 2 || fit_counts[1] < 2 {
        return Err(CliError::Data(format!(
            "fitting the outcome model needs at least 2 patients per class outside the \
             test split; found {} negative and {} positive",
            fit_counts[0], fit_counts[1]
        )));
    }
    if holdout_counts[0] < 1 || holdout_counts[1] < 1 {
        return Err(CliError::Data(format!(
            "held-out evaluation needs at least 1 patient per class with test slices; \
             found {} negative and {} positive",
            holdout_counts[0], holdout_counts[1]
        )));
    }

    let mut rows = Vec::with_capacity(2);
    for source in ["upper_bound", "prediction"] {
        let mut fit_features: Vec<[f64; 2]> = Vec::new();
        let mut fit_labels: Vec<u8> = Vec::new();
        let mut hold_features: Vec<[f64; 2]> = Vec::new();
        let mut hold_labels: Vec<u8> = Vec::new();
        for p in &patients {
            let sequences =
                if source == "upper_bound" { &p.gt_sequences } else { &p.pred_sequences };
            let vector = patient_biomarker(sequences).map_err(data_err)?;
            if p.holdout {
                hold_features.push(vector.independent());
                hold_labels.push(p.label);
            } else {
                fit_features.push(vector.independent());
                fit_labels.push(p.label);
            }
        }
        let (model, fit_metrics) = tune_youden(
            &fit_features,
            &fit_labels,
            &DEFAULT_WEIGHT_GRID,
            &default_threshold_grid(),
            args.iterations,
            args.lr,
        )
        .map_err(data_err)?;
        let scores: Vec<f64> = hold_features.iter().map(|&f| model.score(f)).collect();
        let hold_metrics =
            biomarker::prog_metrics(&scores, &hold_labels, model.threshold).map_err(data_err)?;
        rows.push(OutcomeRow {
            row: source.to_string(),
            class_weight_pos: model.class_weight_pos,
            threshold: model.threshold,
            weights: model.weights,
            bias: model.bias,
            fit: row_metrics(&fit_metrics),
            holdout: row_metrics(&hold_metrics),
        });
    }

    let report = BiomarkerReport {
        format_version: FORMAT_VERSION.to_string(),
        n_fit_patients: fit_counts[0] + fit_counts[1],
        n_holdout_patients: holdout_counts[0] + holdout_counts[1],
        iterations: args.iterations,
        lr: args.lr,
        rows,
    };
    if let Some(out) = &args.out {
        report.save(out)?;
    }
    emit(serde_json::to_string_pretty(&report).expect("serializable report"));
    Ok(())
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Seed for the random instances.
    #[arg(long, default_value_t = 17)]
    pub seed: u64,
    /// Number of random (dims, params, inputs) instances to sweep.
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Test hook: negate the hidden-activation derivative to prove the
    /// check catches a wrong gradient.
    #[arg(long, hide = true)]
    pub flip_gelu: bool,
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let report = gradcheck::run(args.seed, args.instances, args.flip_gelu);
    for tensor in &report.tensors {
        emit(format_args!("{:<7} max_rel_err {:.3e}", tensor.name, tensor.max_rel_err));
    }
    emit(format_args!(
        "{}: worst {} {:.3e} over {} instances (tolerance {:.0e})",
        if report.pass { "PASS" } else { "FAIL" },
        report.worst_tensor,
        report.worst_rel_err,
        report.instances,
        report.tolerance
    ));
    if !report.pass {
        return Err(CliError::Check(format!(
            "analytic gradient of {} deviates from finite differences by {:.3e} (tolerance {:.0e})",
            report.worst_tensor, report.worst_rel_err, report.tolerance
        )));
    }
    Ok(())
}
