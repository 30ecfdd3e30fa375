//! Confusion counts, foreground/background/overall IoU, reconstruction-aware
//! evaluation and the ground-truth perturbation check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::morphology::{dilate_with, erode_with, Footprint, MorphologyError};
use crate::patch::{extract, reconstruct_mosaic, reconstruct_overlap_mean, PatchError, PatchLayout};
use crate::volume::{BinaryMask, Volume, VolumeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("mode {0:?} needs patch predictions and a layout")]
    MissingLayout(ReconstructionMode),
    #[error("mode {0:?} evaluates a full-size prediction, got patches")]
    ModeMismatch(ReconstructionMode),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Morphology(#[from] MorphologyError),
}

impl MetricsError {
    pub fn name(&self) -> &'static str {
        match self {
            MetricsError::MissingLayout(_) => "MissingLayout",
            MetricsError::ModeMismatch(_) => "ModeMismatch",
            MetricsError::Volume(e) => e.name(),
            MetricsError::Patch(e) => e.name(),
            MetricsError::Morphology(_) => "InvalidRadius",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `TP / (TP + FP + FN)`; `None` when both masks are empty.
    pub fn iou_foreground(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp + self.fn_)
    }

    /// `TN / (TN + FP + FN)`; `None` when both masks are full.
    pub fn iou_background(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp + self.fn_)
    }

    pub fn iou_overall(&self) -> Option<f64> {
        overall_iou(self.iou_foreground(), self.iou_background())
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

fn count_slices(pred: &[u8], gt: &[u8]) -> ConfusionCounts {
    const CHUNK: usize = 1 << 16;
    pred.par_chunks(CHUNK)
        .zip(gt.par_chunks(CHUNK))
        .map(|(p, g)| {
            // Index by (pred, gt) as 2 * p + g.
            let mut c = [0u64; 4];
            for (&a, &b) in p.iter().zip(g) {
                c[usize::from(a) * 2 + usize::from(b)] += 1;
            }
            ConfusionCounts {
                tn: c[0],
                fn_: c[1],
                fp: c[2],
                tp: c[3],
            }
        })
        .reduce(ConfusionCounts::default, |a, b| a + b)
}

pub fn confusion_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts, MetricsError> {
    pred.volume().ensure_same_dims(gt.volume())?;
    Ok(count_slices(pred.data(), gt.data()))
}

pub fn foreground_iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<Option<f64>, MetricsError> {
    Ok(confusion_counts(pred, gt)?.iou_foreground())
}

pub fn background_iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<Option<f64>, MetricsError> {
    Ok(confusion_counts(pred, gt)?.iou_background())
}

/// Mean of the two class IoUs; undefined if either is.
pub fn overall_iou(fg: Option<f64>, bg: Option<f64>) -> Option<f64> {
    Some((fg? + bg?) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionMode {
    /// Score each patch against its ground-truth patch and average.
    PerPatch,
    /// Tile non-overlapping patches, then score full images.
    MosaicImage,
    /// Average half-overlapping patches, then score full images.
    Overlap50Image,
    /// Score a prediction made on the whole image.
    FullImage,
}

/// What one averaged score covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalUnit {
    /// Each z-slice is one image (2D workflows).
    #[default]
    Slice,
    /// The whole volume is one image (3D workflows).
    Volume,
    /// Each patch (set by per-patch evaluation).
    Patch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitScore {
    pub index: usize,
    #[serde(flatten)]
    pub counts: ConfusionCounts,
    pub iou_fg: Option<f64>,
    pub iou_bg: Option<f64>,
    pub iou_overall: Option<f64>,
}

impl UnitScore {
    fn new(index: usize, counts: ConfusionCounts) -> Self {
        UnitScore {
            index,
            counts,
            iou_fg: counts.iou_foreground(),
            iou_bg: counts.iou_background(),
            iou_overall: counts.iou_overall(),
        }
    }
}

/// Evaluation result. Counts are pooled over all units; each IoU is the
/// unweighted mean over the units where it is defined, and `iou_overall` is
/// the mean of the two averaged class IoUs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoUReport {
    pub mode: ReconstructionMode,
    pub threshold: f64,
    pub unit: EvalUnit,
    #[serde(flatten)]
    pub counts: ConfusionCounts,
    pub iou_fg: Option<f64>,
    pub iou_bg: Option<f64>,
    pub iou_overall: Option<f64>,
    pub units: Vec<UnitScore>,
}

impl IoUReport {
    pub fn from_units(mode: ReconstructionMode, threshold: f64, unit: EvalUnit, units: Vec<UnitScore>) -> Self {
        let mean = |f: fn(&UnitScore) -> Option<f64>| {
            let vals: Vec<f64> = units.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let iou_fg = mean(|u| u.iou_fg);
        let iou_bg = mean(|u| u.iou_bg);
        let counts = units.iter().fold(ConfusionCounts::default(), |a, u| a + u.counts);
        IoUReport {
            mode,
            threshold,
            unit,
            counts,
            iou_fg,
            iou_bg,
            iou_overall: overall_iou(iou_fg, iou_bg),
            units,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// A prediction as produced by the network: one full-size volume, or patches
/// with the layout they were cut with.
#[derive(Debug, Clone, Copy)]
pub enum Prediction<'a> {
    Full(&'a Volume<f32>),
    Patches {
        patches: &'a [Volume<f32>],
        layout: &'a PatchLayout,
    },
}

fn image_units(pred: &BinaryMask, gt: &BinaryMask, unit: EvalUnit) -> Result<Vec<UnitScore>, MetricsError> {
    pred.volume().ensure_same_dims(gt.volume())?;
    Ok(match unit {
        EvalUnit::Volume | EvalUnit::Patch => vec![UnitScore::new(0, count_slices(pred.data(), gt.data()))],
        EvalUnit::Slice => {
            let plane = pred.volume().slice_len();
            pred.data()
                .chunks(plane)
                .zip(gt.data().chunks(plane))
                .enumerate()
                .map(|(z, (p, g))| UnitScore::new(z, count_slices(p, g)))
                .collect()
        }
    })
}

/// Scores `pred` against `gt` under one of the reconstruction strategies.
///
/// Image modes score per z-slice or per volume according to `unit`.
/// `PerPatch` compares each patch with the ground truth cut by the same
/// layout (reflected where the layout pads) and always uses patch units.
pub fn evaluate(
    pred: Prediction<'_>,
    gt: &BinaryMask,
    threshold: f64,
    mode: ReconstructionMode,
    unit: EvalUnit,
) -> Result<IoUReport, MetricsError> {
    let units = match (mode, pred) {
        (ReconstructionMode::FullImage, Prediction::Full(p)) => image_units(&p.binarize(threshold)?, gt, unit)?,
        (ReconstructionMode::FullImage, Prediction::Patches { .. }) => {
            return Err(MetricsError::ModeMismatch(mode));
        }
        (_, Prediction::Full(_)) => return Err(MetricsError::MissingLayout(mode)),
        (ReconstructionMode::PerPatch, Prediction::Patches { patches, layout }) => {
            layout.check_patches(patches)?;
            if layout.dims != gt.dims() {
                return Err(VolumeError::DimMismatch {
                    left: layout.dims,
                    right: gt.dims(),
                }
                .into());
            }
            let gt_patches = extract(gt.volume(), layout)?;
            let units = patches
                .par_iter()
                .zip(&gt_patches)
                .enumerate()
                .map(|(i, (p, g))| {
                    let p = p.binarize(threshold)?;
                    Ok(UnitScore::new(i, count_slices(p.data(), g.data())))
                })
                .collect::<Result<Vec<_>, MetricsError>>()?;
            return Ok(IoUReport::from_units(mode, threshold, EvalUnit::Patch, units));
        }
        (ReconstructionMode::MosaicImage, Prediction::Patches { patches, layout }) => {
            image_units(&reconstruct_mosaic(patches, layout)?.binarize(threshold)?, gt, unit)?
        }
        (ReconstructionMode::Overlap50Image, Prediction::Patches { patches, layout }) => {
            image_units(&reconstruct_overlap_mean(patches, layout)?.binarize(threshold)?, gt, unit)?
        }
    };
    Ok(IoUReport::from_units(mode, threshold, unit, units))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub radius: usize,
    pub footprint: Footprint,
    pub iou_dilated: Option<f64>,
    pub iou_eroded: Option<f64>,
}

/// Foreground IoU of the dilated and of the eroded ground truth against the original.
pub fn gt_perturbation_check(
    gt: &BinaryMask,
    radius: usize,
    footprint: Footprint,
) -> Result<PerturbationReport, MetricsError> {
    let dilated = dilate_with(gt, radius, footprint)?;
    let eroded = erode_with(gt, radius, footprint)?;
    Ok(PerturbationReport {
        radius,
        footprint,
        iou_dilated: foreground_iou(&dilated, gt)?,
        iou_eroded: foreground_iou(&eroded, gt)?,
    })
}
