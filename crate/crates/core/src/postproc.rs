//! Test-time augmentation ensembling and median filtering along z.

use std::fs::File;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{apply_rigid, enumerate_tta, invert_rigid};
use crate::emvol::{self, EmvolError};
use crate::volume::{AnyVolume, BinaryMask, Dims, Volume, VolumeError, Voxel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PostprocError {
    #[error("predictor returned dims {got:?}, expected {expected:?}")]
    PredictorShapeMismatch { expected: Dims, got: Dims },
    #[error("predictor returned {value}, outside [0, 1]")]
    PredictorRangeViolation { value: f32 },
    #[error("predictor failed: {0}")]
    PredictorFailure(String),
    #[error("median window {0} must be odd and positive")]
    EvenWindow(usize),
    #[error("median window {window} exceeds 2*nz-1 for nz = {nz}")]
    WindowTooLarge { window: usize, nz: usize },
    #[error("dimensionality must be 2 or 3, got {0}")]
    InvalidDimensionality(u8),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

impl PostprocError {
    pub fn name(&self) -> &'static str {
        match self {
            PostprocError::PredictorShapeMismatch { .. } => "PredictorShapeMismatch",
            PostprocError::PredictorRangeViolation { .. } => "PredictorRangeViolation",
            PostprocError::PredictorFailure(_) => "PredictorFailure",
            PostprocError::EvenWindow(_) => "EvenWindow",
            PostprocError::WindowTooLarge { .. } => "WindowTooLarge",
            PostprocError::InvalidDimensionality(_) => "InvalidDimensionality",
            PostprocError::Volume(e) => e.name(),
        }
    }

    /// Errors caused by the external predictor rather than by the inputs.
    pub fn is_predictor_error(&self) -> bool {
        matches!(
            self,
            PostprocError::PredictorShapeMismatch { .. }
                | PostprocError::PredictorRangeViolation { .. }
                | PostprocError::PredictorFailure(_)
        )
    }
}

/// Maps an input volume to per-voxel foreground probabilities of the same dims.
pub trait Predictor<T: Voxel>: Sync {
    fn predict(&self, input: &Volume<T>) -> Result<Volume<f32>, PostprocError>;
}

impl<T: Voxel, F> Predictor<T> for F
where
    F: Fn(&Volume<T>) -> Result<Volume<f32>, PostprocError> + Sync,
{
    fn predict(&self, input: &Volume<T>) -> Result<Volume<f32>, PostprocError> {
        self(input)
    }
}

fn checked_predict<T: Voxel>(pred: &impl Predictor<T>, input: &Volume<T>) -> Result<Volume<f32>, PostprocError> {
    let out = pred.predict(input)?;
    if out.dims() != input.dims() {
        return Err(PostprocError::PredictorShapeMismatch {
            expected: input.dims(),
            got: out.dims(),
        });
    }
    if let Some(&value) = out.data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(PostprocError::PredictorRangeViolation { value });
    }
    Ok(out)
}

/// Averages the predictor over the flip/rotation group, undoing each
/// transform on its output. Branches run in parallel; the sum is taken in
/// canonical group order so the result does not depend on scheduling.
pub fn tta_ensemble<T: Voxel>(
    pred: &impl Predictor<T>,
    v: &Volume<T>,
    dimensionality: u8,
) -> Result<Volume<f32>, PostprocError> {
    let group = enumerate_tta(dimensionality).ok_or(PostprocError::InvalidDimensionality(dimensionality))?;
    let branches: Vec<Volume<f32>> = group
        .par_iter()
        .map(|t| {
            let p = checked_predict(pred, &apply_rigid(v, t))?;
            Ok(apply_rigid(&p, &invert_rigid(t)))
        })
        .collect::<Result<_, PostprocError>>()?;
    let mut acc = vec![0.0f64; v.len()];
    for b in &branches {
        for (a, &p) in acc.iter_mut().zip(b.data()) {
            *a += f64::from(p);
        }
    }
    let n = branches.len() as f64;
    let data = acc.into_iter().map(|s| (s / n) as f32).collect();
    Ok(Volume::from_parts(v.dims(), v.spacing(), data))
}

/// Replaces every voxel by the median of the `window` voxels centred on it
/// along z, replicating the first and last slice at the ends.
pub fn median_z_filter<T: Voxel>(m: &Volume<T>, window: usize) -> Result<Volume<T>, PostprocError> {
    if window == 0 || window % 2 == 0 {
        return Err(PostprocError::EvenWindow(window));
    }
    let [_, _, nz] = m.dims();
    if window > 2 * nz - 1 {
        return Err(PostprocError::WindowTooLarge { window, nz });
    }
    if window == 1 {
        return Ok(m.clone());
    }
    let r = window / 2;
    let plane = m.slice_len();
    let src = m.data();
    let mut out = vec![T::default(); m.len()];
    out.par_chunks_mut(plane).enumerate().for_each(|(z, dst)| {
        let zs: Vec<usize> = (0..window).map(|k| (z + k).saturating_sub(r).min(nz - 1)).collect();
        let mut buf = vec![T::default(); window];
        for (i, d) in dst.iter_mut().enumerate() {
            for (b, &zz) in buf.iter_mut().zip(&zs) {
                *b = src[zz * plane + i];
            }
            let (_, med, _) = buf.select_nth_unstable_by(r, T::total_cmp);
            *d = *med;
        }
    });
    Ok(Volume::from_parts(m.dims(), m.spacing(), out))
}

/// Where the median filter sits relative to thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MedianOrder {
    /// Threshold, then filter the labels.
    #[default]
    BinarizeFirst,
    /// Filter the probabilities, then threshold.
    FilterFirst,
}

pub fn median_z_labels(
    prob: &Volume<f32>,
    threshold: f64,
    window: usize,
    order: MedianOrder,
) -> Result<BinaryMask, PostprocError> {
    match order {
        MedianOrder::BinarizeFirst => {
            let labels = prob.binarize(threshold)?;
            let filtered = median_z_filter(labels.volume(), window)?;
            Ok(BinaryMask::from_volume_unchecked(filtered))
        }
        MedianOrder::FilterFirst => Ok(median_z_filter(prob, window)?.binarize(threshold)?),
    }
}

/// Runs an external command as the predictor.
///
/// The command is run through `sh -c` with the input and output EMVOL paths
/// appended as its last two arguments. Its stdout and stderr are captured;
/// a nonzero exit, a timeout or an unreadable output is a `PredictorFailure`.
#[derive(Debug, Clone)]
pub struct SubprocessPredictor {
    pub command: String,
    pub timeout: Duration,
}

impl SubprocessPredictor {
    pub fn new(command: impl Into<String>, timeout: Duration) -> Self {
        SubprocessPredictor {
            command: command.into(),
            timeout,
        }
    }

    fn run(&self, input: &AnyVolume) -> Result<AnyVolume, PostprocError> {
        let fail = |msg: String| PostprocError::PredictorFailure(msg);
        let dir = tempfile::tempdir().map_err(|e| fail(format!("temp dir: {e}")))?;
        let in_path = dir.path().join("input.emvol");
        let out_path: PathBuf = dir.path().join("output.emvol");
        emvol::save_any(input, &in_path).map_err(|e| fail(format!("writing input: {e}")))?;
        let log_path = dir.path().join("stderr.log");
        let log = File::create(&log_path).map_err(|e| fail(format!("log file: {e}")))?;
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(format!("{} \"$@\"", self.command))
            .arg("sh")
            .arg(&in_path)
            .arg(&out_path)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(log)
            .spawn()
            .map_err(|e| fail(format!("spawn: {e}")))?;
        let start = Instant::now();
        let status = loop {
            match child.try_wait().map_err(|e| fail(format!("wait: {e}")))? {
                Some(s) => break s,
                None if start.elapsed() > self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(fail(format!("timed out after {:?}", self.timeout)));
                }
                None => std::thread::sleep(Duration::from_millis(5)),
            }
        };
        if !status.success() {
            let stderr = std::fs::read_to_string(&log_path).unwrap_or_default();
            let tail: String = stderr.trim().chars().rev().take(400).collect::<Vec<_>>().into_iter().rev().collect();
            return Err(fail(format!("command exited with {status}: {tail}")));
        }
        emvol::load_volume(&out_path).map_err(|e: EmvolError| fail(format!("reading output: {e}")))
    }
}

impl<T: Voxel> Predictor<T> for SubprocessPredictor
where
    AnyVolume: From<Volume<T>>,
{
    fn predict(&self, input: &Volume<T>) -> Result<Volume<f32>, PostprocError> {
        match self.run(&AnyVolume::from(input.clone()))? {
            AnyVolume::F32(v) => Ok(v),
            AnyVolume::U8(v) => Ok(v.map(f32::from)),
        }
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::testutil::volume_f32;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn median_is_monotone(v in volume_f32([5, 4, 7]), w in 0usize..4, lift in 0f32..0.5) {
            let window = 2 * w + 1;
            let [_, _, nz] = v.dims();
            prop_assume!(window < 2 * nz);
            let up = v.map(|p| p + lift * p);
            let (a, b) = (median_z_filter(&v, window).unwrap(), median_z_filter(&up, window).unwrap());
            prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x <= y));
        }

        #[test]
        fn median_output_comes_from_the_column(v in volume_f32([4, 3, 6]), w in 0usize..3) {
            let window = 2 * w + 1;
            let [nx, ny, nz] = v.dims();
            prop_assume!(window < 2 * nz);
            let out = median_z_filter(&v, window).unwrap();
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        let o = out.get(x, y, z);
                        prop_assert!((0..nz).any(|k| v.get(x, y, k) == o));
                    }
                }
            }
        }

        #[test]
        fn filter_orders_agree(v in volume_f32([4, 4, 6]), w in 0usize..3, t in 0.05f64..0.95) {
            let window = 2 * w + 1;
            prop_assume!(window < 2 * v.dims()[2]);
            prop_assert!(
                median_z_labels(&v, t, window, MedianOrder::BinarizeFirst).unwrap()
                    == median_z_labels(&v, t, window, MedianOrder::FilterFirst).unwrap()
            );
        }
    }
}
