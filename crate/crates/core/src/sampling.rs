//! Class-balanced random patch sampling and low-foreground patch filtering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::patch::{PatchError, PatchShape};
use crate::volume::{BinaryMask, Dims, Volume, Voxel};

/// Per-voxel sampling distribution that gives a fixed total mass to each class.
///
/// Every foreground voxel carries `fg_mass / N_fg` and every background voxel
/// `(1 - fg_mass) / N_bg`. When one class is absent its mass moves to the other.
#[derive(Debug, Clone)]
pub struct ProbabilityMap {
    mask: BinaryMask,
    foreground_mass: f64,
    n_foreground: u64,
    n_background: u64,
    /// Foreground count before each (y, z) row, for k-th voxel lookup.
    row_prefix: Vec<u64>,
}

pub fn build_probability_map(gt: &BinaryMask, fg_mass: f64) -> Result<ProbabilityMap, PatchError> {
    if !(fg_mass > 0.0 && fg_mass < 1.0) {
        return Err(PatchError::InvalidMass(fg_mass));
    }
    let total = gt.data().len() as u64;
    if total == 0 {
        return Err(PatchError::EmptyMask);
    }
    let nx = gt.dims()[0];
    let mut row_prefix = Vec::with_capacity(gt.data().len() / nx + 1);
    let mut acc = 0u64;
    row_prefix.push(0);
    for row in gt.data().chunks_exact(nx) {
        acc += row.iter().map(|&v| u64::from(v)).sum::<u64>();
        row_prefix.push(acc);
    }
    let n_foreground = acc;
    let n_background = total - acc;
    let foreground_mass = if n_foreground == 0 {
        0.0
    } else if n_background == 0 {
        1.0
    } else {
        fg_mass
    };
    Ok(ProbabilityMap {
        mask: gt.clone(),
        foreground_mass,
        n_foreground,
        n_background,
        row_prefix,
    })
}

impl ProbabilityMap {
    pub fn dims(&self) -> Dims {
        self.mask.dims()
    }

    /// `(foreground_mass, background_mass)`, summing to one.
    pub fn class_mass(&self) -> (f64, f64) {
        (self.foreground_mass, 1.0 - self.foreground_mass)
    }

    pub fn foreground_value(&self) -> f64 {
        if self.n_foreground == 0 {
            0.0
        } else {
            self.foreground_mass / self.n_foreground as f64
        }
    }

    pub fn background_value(&self) -> f64 {
        if self.n_background == 0 {
            0.0
        } else {
            (1.0 - self.foreground_mass) / self.n_background as f64
        }
    }

    pub fn value_at(&self, x: usize, y: usize, z: usize) -> f64 {
        if self.mask.is_set(x, y, z) {
            self.foreground_value()
        } else {
            self.background_value()
        }
    }

    /// Sum of all voxel probabilities.
    pub fn total(&self) -> f64 {
        self.foreground_value() * self.n_foreground as f64
            + self.background_value() * self.n_background as f64
    }

    /// The map materialized as an `f32` volume.
    pub fn to_volume(&self) -> Volume<f32> {
        let (fg, bg) = (self.foreground_value() as f32, self.background_value() as f32);
        self.mask
            .volume()
            .map(|v| if v == 1 { fg } else { bg })
            .with_spacing(self.mask.volume().spacing())
            .expect("spacing already validated")
    }

    /// Linear index of the `k`-th voxel of the requested class.
    fn nth_voxel(&self, foreground: bool, k: u64) -> usize {
        let nx = self.mask.dims()[0] as u64;
        let count_before = |row: usize| {
            if foreground {
                self.row_prefix[row]
            } else {
                row as u64 * nx - self.row_prefix[row]
            }
        };
        // Last row whose prefix count is <= k.
        let rows = self.row_prefix.len() - 1;
        let (mut lo, mut hi) = (0usize, rows);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if count_before(mid) <= k {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut remaining = k - count_before(lo);
        let start = lo * nx as usize;
        let want = u8::from(foreground);
        for (i, &v) in self.mask.data()[start..start + nx as usize].iter().enumerate() {
            if v == want {
                if remaining == 0 {
                    return start + i;
                }
                remaining -= 1;
            }
        }
        unreachable!("row prefix counts are consistent with the mask")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSample {
    /// Voxel drawn from the probability map.
    pub center: [usize; 3],
    /// Patch origin after clamping the patch into the volume.
    pub origin: [usize; 3],
    pub center_is_foreground: bool,
}

/// Draws `n` patch centers i.i.d. from `map` and clamps each patch into bounds.
pub fn sample_patch_origins(
    map: &ProbabilityMap,
    patch: PatchShape,
    n: usize,
    seed: u64,
) -> Result<Vec<PatchSample>, PatchError> {
    let dims = map.dims();
    patch.check_fits(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let foreground = rng.random::<f64>() < map.foreground_mass;
        let count = if foreground {
            map.n_foreground
        } else {
            map.n_background
        };
        let idx = map.nth_voxel(foreground, rng.random_range(0..count));
        let center = [
            idx % dims[0],
            (idx / dims[0]) % dims[1],
            idx / (dims[0] * dims[1]),
        ];
        let mut origin = [0; 3];
        for axis in 0..3 {
            origin[axis] = center[axis]
                .saturating_sub(patch.0[axis] / 2)
                .min(dims[axis] - patch.0[axis]);
        }
        out.push(PatchSample {
            center,
            origin,
            center_is_foreground: foreground,
        });
    }
    Ok(out)
}

pub fn foreground_fraction(mask: &BinaryMask) -> f64 {
    mask.count_foreground() as f64 / mask.data().len() as f64
}

/// Keeps the pairs whose ground-truth foreground fraction is at least `min_fg_fraction`.
pub fn discard_low_foreground<T: Voxel>(
    pairs: Vec<(Volume<T>, BinaryMask)>,
    min_fg_fraction: f64,
) -> Result<Vec<(Volume<T>, BinaryMask)>, PatchError> {
    if !(0.0..1.0).contains(&min_fg_fraction) {
        return Err(PatchError::InvalidFraction(min_fg_fraction));
    }
    Ok(pairs
        .into_iter()
        .filter(|(_, gt)| foreground_fraction(gt) >= min_fg_fraction)
        .collect())
}
