//! Train/validation splits over z-slices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Validation slices drawn uniformly without replacement.
    RandomSlices,
    /// The last slices of the stack.
    ConsecutiveTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fraction: f64,
    pub mode: SplitMode,
    pub seed: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("validation fraction {0} is not in (0, 1)")]
    InvalidFraction(f64),
    #[error("split of {n_slices} slices would put {val} in validation")]
    DegenerateSplit { n_slices: usize, val: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// `round(fraction * n)` with halves rounded up.
pub fn validation_size(n_slices: usize, fraction: f64) -> usize {
    (fraction * n_slices as f64 + 0.5).floor() as usize
}

pub fn split_validation(n_slices: usize, spec: &SplitSpec) -> Result<Split, SplitError> {
    if !(spec.fraction > 0.0 && spec.fraction < 1.0) {
        return Err(SplitError::InvalidFraction(spec.fraction));
    }
    let val_len = validation_size(n_slices, spec.fraction);
    if n_slices < 2 || val_len == 0 || val_len >= n_slices {
        return Err(SplitError::DegenerateSplit {
            n_slices,
            val: val_len,
        });
    }
    let mut val: Vec<usize> = match spec.mode {
        SplitMode::ConsecutiveTail => (n_slices - val_len..n_slices).collect(),
        SplitMode::RandomSlices => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rand::seq::index::sample(&mut rng, n_slices, val_len).into_vec()
        }
    };
    val.sort_unstable();
    let mut is_val = vec![false; n_slices];
    for &i in &val {
        is_val[i] = true;
    }
    let train = (0..n_slices).filter(|&i| !is_val[i]).collect();
    Ok(Split { train, val })
}
