//! Tooling for patch-based segmentation of volumetric electron microscopy data.
//!
//! Volumes are stored x-fastest (`index = x + nx * (y + ny * z)`); 2D data is a
//! volume with one slice per image.

pub mod augment;
pub mod emvol;
pub mod metrics;
pub mod morphology;
pub mod patch;
pub mod postproc;
pub mod sampling;
pub mod split;
pub mod sweepdsl;
pub mod volume;

#[cfg(test)]
mod testutil;

pub use metrics::{
    confusion_counts, evaluate, gt_perturbation_check, ConfusionCounts, EvalUnit, IoUReport, MetricsError,
    Prediction, ReconstructionMode,
};
pub use morphology::Footprint;
pub use patch::{plan_grid, Overlap, PatchError, PatchLayout, PatchShape};
pub use volume::{AnyVolume, BinaryMask, Dims, Dtype, Spacing, Volume, VolumeError, Voxel};
