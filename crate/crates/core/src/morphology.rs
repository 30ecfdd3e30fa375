//! Binary dilation and erosion with square (or cubic) structuring elements.
//!
//! Voxels outside the volume count as background for both operators, so
//! erosion also strips foreground within `radius` of the volume border.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::{BinaryMask, Dims, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Footprint {
    /// `(2r+1)^2` square applied to each z-slice independently.
    #[default]
    Slice,
    /// `(2r+1)^3` cube.
    Cube,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MorphologyError {
    #[error("structuring element radius must be >= 1")]
    InvalidRadius,
}

#[derive(Clone, Copy)]
enum Op {
    Dilate,
    Erode,
}

pub fn dilate(mask: &BinaryMask, radius: usize) -> Result<BinaryMask, MorphologyError> {
    dilate_with(mask, radius, Footprint::Slice)
}

pub fn erode(mask: &BinaryMask, radius: usize) -> Result<BinaryMask, MorphologyError> {
    erode_with(mask, radius, Footprint::Slice)
}

pub fn dilate_with(
    mask: &BinaryMask,
    radius: usize,
    footprint: Footprint,
) -> Result<BinaryMask, MorphologyError> {
    morph(mask, radius, footprint, Op::Dilate)
}

pub fn erode_with(
    mask: &BinaryMask,
    radius: usize,
    footprint: Footprint,
) -> Result<BinaryMask, MorphologyError> {
    morph(mask, radius, footprint, Op::Erode)
}

fn morph(
    mask: &BinaryMask,
    radius: usize,
    footprint: Footprint,
    op: Op,
) -> Result<BinaryMask, MorphologyError> {
    if radius == 0 {
        return Err(MorphologyError::InvalidRadius);
    }
    let vol = mask.volume();
    let dims = vol.dims();
    // The square element is a product of 1D intervals, so the filter separates per axis.
    let mut data = line_pass(vol.data(), dims, 0, radius, op);
    data = line_pass(&data, dims, 1, radius, op);
    if footprint == Footprint::Cube {
        data = line_pass(&data, dims, 2, radius, op);
    }
    Ok(BinaryMask::from_volume_unchecked(Volume::from_parts(
        dims,
        vol.spacing(),
        data,
    )))
}

/// Applies the 1D window operator along `axis` to every line of the volume.
fn line_pass(src: &[u8], dims: Dims, axis: usize, radius: usize, op: Op) -> Vec<u8> {
    let [nx, ny, nz] = dims;
    let mut out = vec![0u8; src.len()];
    let slice = nx * ny;
    match axis {
        0 | 1 => {
            out.par_chunks_mut(slice)
                .zip(src.par_chunks(slice))
                .for_each(|(dst, s)| {
                    let mut line = Vec::new();
                    let mut res = Vec::new();
                    if axis == 0 {
                        for y in 0..ny {
                            let row = &s[y * nx..(y + 1) * nx];
                            filter_line(row, radius, op, &mut res);
                            dst[y * nx..(y + 1) * nx].copy_from_slice(&res);
                        }
                    } else {
                        for x in 0..nx {
                            line.clear();
                            line.extend((0..ny).map(|y| s[y * nx + x]));
                            filter_line(&line, radius, op, &mut res);
                            for (y, &v) in res.iter().enumerate() {
                                dst[y * nx + x] = v;
                            }
                        }
                    }
                });
        }
        _ => {
            let mut line = Vec::with_capacity(nz);
            let mut res = Vec::with_capacity(nz);
            for i in 0..slice {
                line.clear();
                line.extend((0..nz).map(|z| src[z * slice + i]));
                filter_line(&line, radius, op, &mut res);
                for (z, &v) in res.iter().enumerate() {
                    out[z * slice + i] = v;
                }
            }
        }
    }
    out
}

/// Windowed OR (dilate) or AND (erode) over `[i - r, i + r]` using a running count.
fn filter_line(line: &[u8], radius: usize, op: Op, out: &mut Vec<u8>) {
    let n = line.len();
    out.clear();
    out.resize(n, 0);
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0usize);
    for &v in line {
        prefix.push(prefix.last().unwrap() + v as usize);
    }
    let full = 2 * radius + 1;
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius + 1).min(n);
        let ones = prefix[hi] - prefix[lo];
        *o = match op {
            Op::Dilate => u8::from(ones > 0),
            Op::Erode => u8::from(ones == full),
        };
    }
}
