//! Per-slice resampling augmentations: free rotation, shift, shear, zoom, elastic
//! deformation, plus brightness scaling and a 2D median filter.
//!
//! Every geometric op is an inverse map from output pixel to source position.
//! Positions outside the slice are folded back by mirror reflection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AugmentError;
use crate::patch::reflect_index;
use crate::volume::{Dtype, Volume, Voxel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

fn check_interp<T: Voxel>(interp: Interpolation) -> Result<(), AugmentError> {
    if interp == Interpolation::Bilinear && T::DTYPE == Dtype::U8 {
        return Err(AugmentError::InterpolationOnMask);
    }
    Ok(())
}

fn finite(name: &'static str, value: f64) -> Result<f64, AugmentError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(AugmentError::InvalidParameter { name, value })
    }
}

/// Resamples every slice through `src_of(x, y) -> (sx, sy)`.
fn warp<T: Voxel>(
    v: &Volume<T>,
    interp: Interpolation,
    src_of: impl Fn(usize, usize) -> (f64, f64) + Sync,
) -> Result<Volume<T>, AugmentError> {
    check_interp::<T>(interp)?;
    let [nx, ny, _] = v.dims();
    let plane = nx * ny;
    let mut out = vec![T::default(); v.len()];
    out.par_chunks_mut(plane)
        .zip(v.data().par_chunks(plane))
        .for_each(|(dst, src)| {
            for y in 0..ny {
                for x in 0..nx {
                    let (sx, sy) = src_of(x, y);
                    dst[y * nx + x] = sample(src, nx, ny, sx, sy, interp);
                }
            }
        });
    Ok(Volume::from_parts(v.dims(), v.spacing(), out))
}

fn sample<T: Voxel>(src: &[T], nx: usize, ny: usize, sx: f64, sy: f64, interp: Interpolation) -> T {
    match interp {
        Interpolation::Nearest => {
            let ix = reflect_index(sx.round() as isize, nx);
            let iy = reflect_index(sy.round() as isize, ny);
            src[iy * nx + ix]
        }
        Interpolation::Bilinear => {
            let (fx, fy) = (sx.floor(), sy.floor());
            let (tx, ty) = (sx - fx, sy - fy);
            let (x0, y0) = (fx as isize, fy as isize);
            let at = |x: isize, y: isize| {
                src[reflect_index(y, ny) * nx + reflect_index(x, nx)].to_f64()
            };
            let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
            let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
            T::from_f64(top * (1.0 - ty) + bottom * ty)
        }
    }
}

fn center(n: usize) -> f64 {
    (n as f64 - 1.0) / 2.0
}

/// Rotates each slice about its center; positive angles turn counter-clockwise
/// with x rightward and y downward.
pub fn rotate_free<T: Voxel>(
    v: &Volume<T>,
    angle_degrees: f64,
    interp: Interpolation,
) -> Result<Volume<T>, AugmentError> {
    let theta = finite("angle", angle_degrees)?.to_radians();
    let (sin, cos) = theta.sin_cos();
    let [nx, ny, _] = v.dims();
    let (cx, cy) = (center(nx), center(ny));
    warp(v, interp, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        (cos * dx - sin * dy + cx, sin * dx + cos * dy + cy)
    })
}

/// Translates content by a fraction of the slice extent along x and y.
pub fn shift<T: Voxel>(
    v: &Volume<T>,
    dx_frac: f64,
    dy_frac: f64,
    interp: Interpolation,
) -> Result<Volume<T>, AugmentError> {
    let [nx, ny, _] = v.dims();
    let dx = finite("dx", dx_frac)? * nx as f64;
    let dy = finite("dy", dy_frac)? * ny as f64;
    warp(v, interp, |x, y| (x as f64 - dx, y as f64 - dy))
}

/// Horizontal shear about the slice center: row `y` moves by `factor * (y - cy)`.
pub fn shear<T: Voxel>(v: &Volume<T>, factor: f64, interp: Interpolation) -> Result<Volume<T>, AugmentError> {
    let f = finite("shear", factor)?;
    let cy = center(v.dims()[1]);
    warp(v, interp, |x, y| (x as f64 - f * (y as f64 - cy), y as f64))
}

/// Isotropic in-plane zoom about the slice center; factors above 1 magnify.
pub fn zoom<T: Voxel>(v: &Volume<T>, factor: f64, interp: Interpolation) -> Result<Volume<T>, AugmentError> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(AugmentError::InvalidParameter {
            name: "zoom",
            value: factor,
        });
    }
    let [nx, ny, _] = v.dims();
    let (cx, cy) = (center(nx), center(ny));
    warp(v, interp, |x, y| {
        (cx + (x as f64 - cx) / factor, cy + (y as f64 - cy) / factor)
    })
}

/// Multiplies intensities by `factor` and clamps into `[0, 1]`.
pub fn brightness(v: &Volume<f32>, factor: f64) -> Result<Volume<f32>, AugmentError> {
    if !(factor.is_finite() && factor >= 0.0) {
        return Err(AugmentError::InvalidParameter {
            name: "brightness",
            value: factor,
        });
    }
    Ok(v.map(|p| (f64::from(p) * factor).clamp(0.0, 1.0) as f32))
}

/// Square `size`×`size` median over each slice with mirrored borders.
pub fn median_filter_2d<T: Voxel>(v: &Volume<T>, size: usize) -> Result<Volume<T>, AugmentError> {
    if size == 0 || size % 2 == 0 {
        return Err(AugmentError::BadKernelSize(size));
    }
    if size == 1 {
        return Ok(v.clone());
    }
    let r = (size / 2) as isize;
    let [nx, ny, _] = v.dims();
    let plane = nx * ny;
    let mut out = vec![T::default(); v.len()];
    out.par_chunks_mut(plane)
        .zip(v.data().par_chunks(plane))
        .for_each(|(dst, src)| {
            let mut window = Vec::with_capacity(size * size);
            for y in 0..ny as isize {
                for x in 0..nx as isize {
                    window.clear();
                    for dy in -r..=r {
                        let row = reflect_index(y + dy, ny) * nx;
                        for dx in -r..=r {
                            window.push(src[row + reflect_index(x + dx, nx)]);
                        }
                    }
                    let mid = window.len() / 2;
                    let (_, m, _) = window.select_nth_unstable_by(mid, T::total_cmp);
                    dst[y as usize * nx + x as usize] = *m;
                }
            }
        });
    Ok(Volume::from_parts(v.dims(), v.spacing(), out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticParams {
    /// Displacement scale in voxels.
    pub alpha: f64,
    /// Gaussian smoothing standard deviation in voxels.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for ElasticParams {
    fn default() -> Self {
        ElasticParams {
            alpha: 8.0,
            sigma: 4.0,
            seed: 0,
        }
    }
}

impl ElasticParams {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(AugmentError::InvalidParameter {
                name: "alpha",
                value: self.alpha,
            });
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(AugmentError::InvalidParameter {
                name: "sigma",
                value: self.sigma,
            });
        }
        Ok(())
    }
}

/// In-plane displacement, shared by every slice of a volume.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub nx: usize,
    pub ny: usize,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl DisplacementField {
    pub fn mean_magnitude(&self) -> f64 {
        let n = self.dx.len().max(1) as f64;
        self.dx
            .iter()
            .zip(&self.dy)
            .map(|(a, b)| a.hypot(*b))
            .sum::<f64>()
            / n
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|w| w / s).collect()
}

fn smooth(field: &mut [f64], nx: usize, ny: usize, kernel: &[f64]) {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; field.len()];
    for y in 0..ny {
        for x in 0..nx {
            tmp[y * nx + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, w)| w * field[y * nx + reflect_index(x as isize + i as isize - r, nx)])
                .sum();
        }
    }
    for y in 0..ny {
        for x in 0..nx {
            field[y * nx + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, w)| w * tmp[reflect_index(y as isize + i as isize - r, ny) * nx + x])
                .sum();
        }
    }
}

/// `alpha` times Gaussian-smoothed uniform noise in `[-1, 1]`, one field per axis.
pub fn displacement_field(nx: usize, ny: usize, params: &ElasticParams) -> Result<DisplacementField, AugmentError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let kernel = gaussian_kernel(params.sigma);
    let mut noise = || {
        let mut f: Vec<f64> = (0..nx * ny).map(|_| rng.random_range(-1.0..=1.0)).collect();
        smooth(&mut f, nx, ny, &kernel);
        f.iter_mut().for_each(|d| *d *= params.alpha);
        f
    };
    let dx = noise();
    let dy = noise();
    Ok(DisplacementField { nx, ny, dx, dy })
}

pub fn elastic_deform<T: Voxel>(
    v: &Volume<T>,
    params: &ElasticParams,
    interp: Interpolation,
) -> Result<Volume<T>, AugmentError> {
    check_interp::<T>(interp)?;
    if params.alpha == 0.0 {
        params.validate()?;
        return Ok(v.clone());
    }
    let [nx, ny, _] = v.dims();
    let field = displacement_field(nx, ny, params)?;
    warp(v, interp, |x, y| {
        let i = y * nx + x;
        (x as f64 + field.dx[i], y as f64 + field.dy[i])
    })
}
