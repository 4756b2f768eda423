//! On-disk formats: dataset manifest, raw image/mask files, model
//! checkpoints, training history, and evaluation/outcome reports.
//!
//! Conventions shared by every format:
//!
//! * JSON with a `format_version` field; readers reject unknown major
//!   versions. Serialization is struct-ordered and pretty-printed, so
//!   load -> save round-trips byte-for-byte.
//! * Images are raw little-endian `f32`, row-major; masks are raw bytes 0/1;
//!   dimensions come from the manifest's config echo.
//! * Manifest paths are relative to the manifest's directory.
//! * All writes go to a temp file in the target directory and are renamed
//!   into place.

use crate::error::CliError;
use bseq_core::features::FeatureOptions;
use bseq_core::mlp::MlpParams;
use bseq_core::phantom::{AngleBands, PatientRecord, PhantomConfig};
use bseq_core::raster::{BinaryMask, GrayImage};
use bseq_core::training::{EpochStats, SgdConfig};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Version written by this build; readers accept any `1.x`.
pub const FORMAT_VERSION: &str = "1.0";

/// Rejects a version whose major component differs from ours.
pub fn check_version(version: &str, what: &str) -> Result<(), CliError> {
    let major = version.split('.').next().unwrap_or("");
    let ours = FORMAT_VERSION.split('.').next().unwrap();
    if major != ours {
        return Err(CliError::Data(format!(
            "{what} has format version {version}, expected {ours}.x"
        )));
    }
    Ok(())
}

/// Writes bytes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    fs::write(&tmp, bytes).map_err(|e| CliError::io("writing", &tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io("renaming into", path, e))
}

fn to_pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report types");
    text.push('\n');
    text.into_bytes()
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}' (expected train|val|test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientEntry {
    pub patient_id: u64,
    pub mvi_label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceEntry {
    pub patient_id: u64,
    pub slice_index: usize,
    pub split: Split,
    pub image: String,
    pub mask: String,
    pub labels: Vec<u8>,
    pub n: usize,
    pub angle_bands: AngleBands,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub phantom_config: PhantomConfig,
    pub n_vertices: usize,
    pub patients: Vec<PatientEntry>,
    pub slices: Vec<SliceEntry>,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, &to_pretty_json(self))
    }

    pub fn load(path: &Path) -> Result<Manifest, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io("reading manifest", path, e))?;
        let manifest: Manifest = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Data(format!("parsing manifest {}: {e}", path.display())))?;
        check_version(&manifest.format_version, "manifest")?;
        let n = manifest.n_vertices;
        for s in &manifest.slices {
            if s.n != n || s.labels.len() != n {
                return Err(CliError::Data(format!(
                    "slice p{}/s{} has {} labels (n={}), manifest n_vertices is {n}",
                    s.patient_id,
                    s.slice_index,
                    s.labels.len(),
                    s.n
                )));
            }
            if s.labels.iter().any(|&c| c > 2) {
                return Err(CliError::Data(format!(
                    "slice p{}/s{} has a class label outside 0..=2",
                    s.patient_id, s.slice_index
                )));
            }
        }
        Ok(manifest)
    }

    pub fn mvi_label(&self, patient_id: u64) -> Option<u8> {
        self.patients.iter().find(|p| p.patient_id == patient_id).map(|p| p.mvi_label)
    }
}

/// Locates the manifest under `--data`: the path itself if it is a file,
/// else `<dir>/manifest.json`.
pub fn manifest_path(data: &Path) -> PathBuf {
    if data.is_file() {
        data.to_path_buf()
    } else {
        data.join("manifest.json")
    }
}

// ---------------------------------------------------------------------------
// Raw image / mask payloads
// ---------------------------------------------------------------------------

pub fn write_image(path: &Path, image: &GrayImage) -> Result<(), CliError> {
    let mut bytes = Vec::with_capacity(image.data.len() * 4);
    for v in &image.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_image(path: &Path, width: usize, height: usize) -> Result<GrayImage, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io("reading image", path, e))?;
    if bytes.len() != width * height * 4 {
        return Err(CliError::Data(format!(
            "image {} has {} bytes, expected {} for {width}x{height} f32",
            path.display(),
            bytes.len(),
            width * height * 4
        )));
    }
    let mut image = GrayImage::new(width, height);
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        image.data[i] = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
    }
    Ok(image)
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<(), CliError> {
    write_atomic(path, &mask.data)
}

pub fn read_mask(path: &Path, width: usize, height: usize) -> Result<BinaryMask, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io("reading mask", path, e))?;
    if bytes.len() != width * height {
        return Err(CliError::Data(format!(
            "mask {} has {} bytes, expected {}",
            path.display(),
            bytes.len(),
            width * height
        )));
    }
    if let Some(bad) = bytes.iter().find(|&&b| b > 1) {
        return Err(CliError::Data(format!(
            "mask {} contains byte {bad}, expected 0 or 1",
            path.display()
        )));
    }
    let mut mask = BinaryMask::new(width, height);
    mask.data = bytes;
    Ok(mask)
}

/// Loads one slice's pixel data relative to the manifest's directory.
pub fn load_slice_data(
    manifest_dir: &Path,
    cfg: &PhantomConfig,
    entry: &SliceEntry,
) -> Result<(GrayImage, BinaryMask), CliError> {
    let size = cfg.validated().image_size;
    let image = read_image(&manifest_dir.join(&entry.image), size, size)?;
    let mask = read_mask(&manifest_dir.join(&entry.mask), size, size)?;
    Ok((image, mask))
}

// ---------------------------------------------------------------------------
// Dataset writer
// ---------------------------------------------------------------------------

/// How to divide slices among train/val/test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitSpec {
    /// Exact slice counts; must sum to the number of slices.
    Counts([usize; 3]),
    /// Fractions summing to 1 (within 1e-9); converted to counts by
    /// largest remainder, earlier splits winning ties.
    Fractions([f64; 3]),
}

impl SplitSpec {
    fn counts(&self, total: usize) -> Result<[usize; 3], CliError> {
        match *self {
            SplitSpec::Counts(c) => {
                let sum: usize = c.iter().sum();
                if sum != total {
                    return Err(CliError::Usage(format!(
                        "split counts {c:?} sum to {sum}, dataset has {total} slices"
                    )));
                }
                Ok(c)
            }
            SplitSpec::Fractions(f) => {
                let sum: f64 = f.iter().sum();
                if f.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(CliError::Usage(format!(
                        "split fractions {f:?} must lie in [0,1] and sum to 1"
                    )));
                }
                let mut counts = [0usize; 3];
                let mut remainders = [0.0f64; 3];
                let mut assigned = 0usize;
                for i in 0..3 {
                    let exact = f[i] * total as f64;
                    counts[i] = exact.floor() as usize;
                    remainders[i] = exact - exact.floor();
                    assigned += counts[i];
                }
                let mut order = [0usize, 1, 2];
                order.sort_by(|&a, &b| {
                    remainders[b].partial_cmp(&remainders[a]).unwrap().then(a.cmp(&b))
                });
                for &i in order.iter().take(total - assigned) {
                    counts[i] += 1;
                }
                Ok(counts)
            }
        }
    }
}

/// Writes a cohort to `out_dir` (`images/`, `masks/`, `manifest.json`),
/// assigning splits to slices in patient-major enumeration order: the first
/// `train` slices go to train, the next `val` to val, the rest to test.
/// Returns the manifest path.
pub fn write_dataset(
    records: &[PatientRecord],
    cfg: &PhantomConfig,
    split: SplitSpec,
    out_dir: &Path,
) -> Result<PathBuf, CliError> {
    let total: usize = records.iter().map(|r| r.slices.len()).sum();
    if total == 0 {
        return Err(CliError::Usage("empty dataset: no slices to write".to_string()));
    }
    let counts = split.counts(total)?;
    let cfg = cfg.validated();

    let images_dir = out_dir.join("images");
    let masks_dir = out_dir.join("masks");
    fs::create_dir_all(&images_dir).map_err(|e| CliError::io("creating", &images_dir, e))?;
    fs::create_dir_all(&masks_dir).map_err(|e| CliError::io("creating", &masks_dir, e))?;

    let mut slices = Vec::with_capacity(total);
    let mut patients = Vec::with_capacity(records.len());
    let mut written = 0usize;
    for record in records {
        patients.push(PatientEntry { patient_id: record.patient_id, mvi_label: record.mvi_label });
        for slice in &record.slices {
            let stem = format!("p{:04}_s{:02}", record.patient_id, slice.slice_index);
            let image_rel = format!("images/{stem}.img");
            let mask_rel = format!("masks/{stem}.msk");
            write_image(&out_dir.join(&image_rel), &slice.image)?;
            write_mask(&out_dir.join(&mask_rel), &slice.mask)?;
            let split = if written < counts[0] {
                Split::Train
            } else if written < counts[0] + counts[1] {
                Split::Val
            } else {
                Split::Test
            };
            written += 1;
            slices.push(SliceEntry {
                patient_id: slice.patient_id,
                slice_index: slice.slice_index,
                split,
                image: image_rel,
                mask: mask_rel,
                labels: slice.gt_label_sequence.clone(),
                n: slice.gt_label_sequence.len(),
                angle_bands: slice.gt_angle_labels.clone(),
            });
        }
    }

    let manifest = Manifest {
        format_version: FORMAT_VERSION.to_string(),
        phantom_config: cfg,
        n_vertices: cfg.n_vertices,
        patients,
        slices,
    };
    let path = out_dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Input features per vertex.
    pub d: usize,
    /// Hidden units.
    pub hidden: usize,
    /// Classes.
    pub k: usize,
    /// Vertices per slice at training time.
    pub n_vertices: usize,
    /// Merged appearance channels (input dim minus the two coordinates).
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: String,
    pub dims: Dims,
    pub features: FeatureOptions,
    pub train_config: SgdConfig,
    pub seed: u64,
    pub best_epoch: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Checkpoint {
    pub fn from_params(
        params: &MlpParams,
        features: FeatureOptions,
        n_vertices: usize,
        train_config: SgdConfig,
        seed: u64,
        best_epoch: usize,
    ) -> Checkpoint {
        Checkpoint {
            format_version: FORMAT_VERSION.to_string(),
            dims: Dims {
                d: params.d,
                hidden: params.hidden,
                k: params.k,
                n_vertices,
                channels: features.merged_channels(),
            },
            features,
            train_config,
            seed,
            best_epoch,
            w1: params.w1.clone(),
            b1: params.b1.clone(),
            w2: params.w2.clone(),
            b2: params.b2.clone(),
        }
    }

    pub fn to_params(&self) -> Result<MlpParams, CliError> {
        let Dims { d, hidden, k, .. } = self.dims;
        if self.w1.len() != d * hidden
            || self.b1.len() != hidden
            || self.w2.len() != hidden * k
            || self.b2.len() != k
        {
            return Err(CliError::Data(format!(
                "checkpoint weight arrays do not match dims d={d} hidden={hidden} k={k}"
            )));
        }
        Ok(MlpParams {
            d,
            hidden,
            k,
            w1: self.w1.clone(),
            b1: self.b1.clone(),
            w2: self.w2.clone(),
            b2: self.b2.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, &to_pretty_json(self))
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io("reading checkpoint", path, e))?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Data(format!("parsing checkpoint {}: {e}", path.display())))?;
        check_version(&ckpt.format_version, "checkpoint")?;
        if ckpt.features.feature_dim() != ckpt.dims.d {
            return Err(CliError::Data(format!(
                "checkpoint dims.d = {} does not match its feature options ({} dims)",
                ckpt.dims.d,
                ckpt.features.feature_dim()
            )));
        }
        Ok(ckpt)
    }
}

/// Training history: one JSON object per line, deterministic fields only.
pub fn save_history(path: &Path, epochs: &[EpochStats]) -> Result<(), CliError> {
    let mut text = String::new();
    for e in epochs {
        text.push_str(&serde_json::to_string(e).expect("serializable epoch stats"));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Rounds a `[0,1]` value to a percent with two decimals.
pub fn percent(x: f64) -> f64 {
    (x * 10_000.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBreakdown {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: String,
    pub split: Split,
    pub n_slices: usize,
    pub n_vertices: usize,
    pub perturb: f64,
    pub seed: u64,
    pub features: FeatureOptions,
    /// Macro metrics in percent, two decimals.
    pub metrics: PercentMetrics,
    pub per_class: Vec<ClassBreakdown>,
    /// Mean DSC between the masks inference ran on and the ground truth,
    /// percent, two decimals (100.00 when evaluating unperturbed masks).
    pub dsc: f64,
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, &to_pretty_json(self))
    }

    pub fn load(path: &Path) -> Result<EvalReport, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io("reading report", path, e))?;
        let report: EvalReport = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Data(format!("parsing report {}: {e}", path.display())))?;
        check_version(&report.format_version, "eval report")?;
        Ok(report)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    /// "upper_bound" (ground-truth label sequences) or "prediction".
    pub row: String,
    pub class_weight_pos: f64,
    pub threshold: f64,
    pub weights: [f64; 2],
    pub bias: f64,
    /// Operating-point metrics on the fit patients (threshold was tuned
    /// on these) and on the held-out patients.
    pub fit: RowMetrics,
    pub holdout: RowMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMetrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub auc: Option<f64>,
    pub j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerReport {
    pub format_version: String,
    pub n_fit_patients: usize,
    pub n_holdout_patients: usize,
    pub iterations: usize,
    pub lr: f64,
    pub rows: Vec<OutcomeRow>,
}

impl BiomarkerReport {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, &to_pretty_json(self))
    }

    pub fn load(path: &Path) -> Result<BiomarkerReport, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io("reading report", path, e))?;
        let report: BiomarkerReport = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Data(format!("parsing report {}: {e}", path.display())))?;
        check_version(&report.format_version, "outcome report")?;
        Ok(report)
    }
}
