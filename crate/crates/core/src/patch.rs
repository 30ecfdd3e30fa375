//! Grid patch layouts, extraction and the output reconstruction strategies.
//!
//! A [`PatchLayout`] records everything needed to put patch predictions back
//! at full size, and serializes to JSON so extraction and reconstruction can
//! happen in separate processes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::{Dims, Spacing, Volume, VolumeError, Voxel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatchError {
    #[error("patch extent {patch} exceeds volume extent {dim} on axis {axis}")]
    PatchLargerThanVolume { axis: usize, patch: usize, dim: usize },
    #[error("patch shape {0:?} has a zero extent")]
    InvalidPatchShape([usize; 3]),
    #[error("layout does not match input: {0}")]
    LayoutMismatch(String),
    #[error("expected {expected} patches, got {got}")]
    WrongPatchCount { expected: usize, got: usize },
    #[error("operation needs a {expected:?} layout, got {found:?}")]
    WrongOverlap { expected: Overlap, found: Overlap },
    #[error("spline window length {0} must be even and >= 2")]
    OddLength(usize),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("mask has no voxels")]
    EmptyMask,
    #[error("foreground mass {0} is not in (0, 1)")]
    InvalidMass(f64),
    #[error("minimum foreground fraction {0} is not in [0, 1)")]
    InvalidFraction(f64),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

impl PatchError {
    pub fn name(&self) -> &'static str {
        match self {
            PatchError::PatchLargerThanVolume { .. } => "PatchLargerThanVolume",
            PatchError::InvalidPatchShape(_) => "InvalidPatchShape",
            PatchError::LayoutMismatch(_) => "LayoutMismatch",
            PatchError::WrongPatchCount { .. } => "WrongPatchCount",
            PatchError::WrongOverlap { .. } => "LayoutMismatch",
            PatchError::OddLength(_) => "OddLength",
            PatchError::InvalidLayout(_) => "InvalidLayout",
            PatchError::EmptyMask => "EmptyMask",
            PatchError::InvalidMass(_) => "InvalidMass",
            PatchError::InvalidFraction(_) => "InvalidFraction",
            PatchError::Volume(e) => e.name(),
        }
    }
}

/// Patch extent along (x, y, z); `z == 1` expresses 2D patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatchShape(pub [usize; 3]);

impl PatchShape {
    pub fn new(px: usize, py: usize, pz: usize) -> Result<Self, PatchError> {
        let shape = [px, py, pz];
        if shape.contains(&0) {
            return Err(PatchError::InvalidPatchShape(shape));
        }
        Ok(PatchShape(shape))
    }

    pub fn voxels(&self) -> usize {
        self.0.iter().product()
    }

    pub(crate) fn check_fits(&self, dims: Dims) -> Result<(), PatchError> {
        if self.0.contains(&0) {
            return Err(PatchError::InvalidPatchShape(self.0));
        }
        for axis in 0..3 {
            if self.0[axis] > dims[axis] {
                return Err(PatchError::PatchLargerThanVolume {
                    axis,
                    patch: self.0[axis],
                    dim: dims[axis],
                });
            }
        }
        Ok(())
    }
}

/// `"256x256"` (depth 1) or `"64x64x16"`.
impl std::str::FromStr for PatchShape {
    type Err = PatchError;

    fn from_str(s: &str) -> Result<Self, PatchError> {
        let parts: Vec<usize> = s
            .split(['x', 'X'])
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| PatchError::InvalidPatchShape([0; 3]))?;
        match parts[..] {
            [x, y] => PatchShape::new(x, y, 1),
            [x, y, z] => PatchShape::new(x, y, z),
            _ => Err(PatchError::InvalidPatchShape([0; 3])),
        }
    }
}

impl std::fmt::Display for PatchShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.0[0], self.0[1], self.0[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overlap {
    /// Stride equals the patch size.
    None,
    /// Stride is `ceil(patch / 2)`.
    Half,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchLayout {
    pub dims: Dims,
    pub patch: PatchShape,
    pub stride: [usize; 3],
    /// Trailing padding per axis, filled by reflection at extraction time.
    pub padding: [usize; 3],
    pub overlap: Overlap,
    /// Patch origins in the padded frame, x varying fastest.
    pub origins: Vec<[usize; 3]>,
}

/// Mirror index into `0..n` without repeating the edge sample (`c b | a b c | b a`).
#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m >= n { period - m } else { m }) as usize
}

fn axis_positions(dim: usize, patch: usize, overlap: Overlap) -> (usize, usize, Vec<usize>) {
    let stride = match overlap {
        Overlap::None => patch,
        Overlap::Half => patch.div_ceil(2),
    };
    let count = match overlap {
        Overlap::None => dim.div_ceil(patch),
        // Enough positions that every voxel past the first stride is covered by
        // two patches; the last one ends exactly on the padded border.
        Overlap::Half if patch == 1 => dim,
        Overlap::Half => dim.div_ceil(stride),
    };
    let padded = (count - 1) * stride + patch;
    let positions = (0..count).map(|k| k * stride).collect();
    (stride, padded - dim, positions)
}

/// Plans a regular tiling of a volume with `dims`.
pub fn plan_grid(dims: Dims, patch: PatchShape, overlap: Overlap) -> Result<PatchLayout, PatchError> {
    patch.check_fits(dims)?;
    let mut stride = [0; 3];
    let mut padding = [0; 3];
    let mut positions: [Vec<usize>; 3] = Default::default();
    for axis in 0..3 {
        let (s, p, pos) = axis_positions(dims[axis], patch.0[axis], overlap);
        stride[axis] = s;
        padding[axis] = p;
        positions[axis] = pos;
    }
    let mut origins = Vec::with_capacity(positions.iter().map(Vec::len).product());
    for &z in &positions[2] {
        for &y in &positions[1] {
            for &x in &positions[0] {
                origins.push([x, y, z]);
            }
        }
    }
    Ok(PatchLayout {
        dims,
        patch,
        stride,
        padding,
        overlap,
        origins,
    })
}

impl PatchLayout {
    pub fn padded_dims(&self) -> Dims {
        [
            self.dims[0] + self.padding[0],
            self.dims[1] + self.padding[1],
            self.dims[2] + self.padding[2],
        ]
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Checks the structural invariants, e.g. after deserializing.
    pub fn validate(&self) -> Result<(), PatchError> {
        let bad = |msg: String| Err(PatchError::InvalidLayout(msg));
        if self.dims.contains(&0) {
            return bad(format!("dims {:?} contain a zero", self.dims));
        }
        if self.patch.0.contains(&0) {
            return bad(format!("patch {:?} contains a zero", self.patch.0));
        }
        if self.stride.contains(&0) {
            return bad(format!("stride {:?} contains a zero", self.stride));
        }
        let padded = self.padded_dims();
        for o in &self.origins {
            for axis in 0..3 {
                if o[axis] + self.patch.0[axis] > padded[axis] {
                    return bad(format!("origin {o:?} runs past padded dims {padded:?}"));
                }
            }
        }
        let key = |o: &[usize; 3]| (o[2], o[1], o[0]);
        if self.origins.windows(2).any(|w| key(&w[0]) >= key(&w[1])) {
            return bad("origins are not unique and sorted x-fastest".into());
        }
        Ok(())
    }

    /// Checks that every voxel of the source volume is covered by some patch.
    pub fn covers_all(&self) -> bool {
        let [nx, ny, nz] = self.dims;
        let mut hit = vec![false; nx * ny * nz];
        for o in &self.origins {
            for z in o[2]..(o[2] + self.patch.0[2]).min(nz) {
                for y in o[1]..(o[1] + self.patch.0[1]).min(ny) {
                    for x in o[0]..(o[0] + self.patch.0[0]).min(nx) {
                        hit[(z * ny + y) * nx + x] = true;
                    }
                }
            }
        }
        hit.into_iter().all(|h| h)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PatchError> {
        let layout: PatchLayout =
            serde_json::from_str(text).map_err(|e| PatchError::InvalidLayout(e.to_string()))?;
        layout.validate()?;
        Ok(layout)
    }

    fn expect_overlap(&self, expected: Overlap) -> Result<(), PatchError> {
        if self.overlap == expected {
            Ok(())
        } else {
            Err(PatchError::WrongOverlap {
                expected,
                found: self.overlap,
            })
        }
    }

    pub fn check_patches<T: Voxel>(&self, patches: &[Volume<T>]) -> Result<(), PatchError> {
        if patches.len() != self.origins.len() {
            return Err(PatchError::WrongPatchCount {
                expected: self.origins.len(),
                got: patches.len(),
            });
        }
        if let Some((i, p)) = patches
            .iter()
            .enumerate()
            .find(|(_, p)| p.dims() != self.patch.0)
        {
            return Err(PatchError::LayoutMismatch(format!(
                "patch {i} has dims {:?}, layout expects {:?}",
                p.dims(),
                self.patch.0
            )));
        }
        Ok(())
    }

    fn output_spacing<T: Voxel>(&self, patches: &[Volume<T>]) -> Spacing {
        patches
            .first()
            .map(Volume::spacing)
            .unwrap_or(crate::volume::UNIT_SPACING)
    }
}

/// Cuts `volume` into the patches of `layout`, in layout order.
pub fn extract<T: Voxel>(volume: &Volume<T>, layout: &PatchLayout) -> Result<Vec<Volume<T>>, PatchError> {
    if volume.dims() != layout.dims {
        return Err(PatchError::LayoutMismatch(format!(
            "volume dims {:?}, layout dims {:?}",
            volume.dims(),
            layout.dims
        )));
    }
    Ok(layout
        .origins
        .par_iter()
        .map(|&origin| extract_one(volume, origin, layout.patch))
        .collect())
}

/// Reads one patch at `origin`; coordinates past the volume are reflected.
pub fn extract_one<T: Voxel>(volume: &Volume<T>, origin: [usize; 3], patch: PatchShape) -> Volume<T> {
    let [nx, ny, nz] = volume.dims();
    let [px, py, pz] = patch.0;
    let src = volume.data();
    let mut data = Vec::with_capacity(patch.voxels());
    for dz in 0..pz {
        let z = reflect_index((origin[2] + dz) as isize, nz);
        for dy in 0..py {
            let y = reflect_index((origin[1] + dy) as isize, ny);
            let row = (z * ny + y) * nx;
            if origin[0] + px <= nx {
                data.extend_from_slice(&src[row + origin[0]..row + origin[0] + px]);
            } else {
                data.extend((0..px).map(|dx| src[row + reflect_index((origin[0] + dx) as isize, nx)]));
            }
        }
    }
    Volume::from_parts(patch.0, volume.spacing(), data)
}

/// Tiles non-overlapping patches back into a volume, cropping the padding.
pub fn reconstruct_mosaic<T: Voxel>(patches: &[Volume<T>], layout: &PatchLayout) -> Result<Volume<T>, PatchError> {
    layout.expect_overlap(Overlap::None)?;
    layout.check_patches(patches)?;
    let [nx, ny, nz] = layout.dims;
    let [px, py, pz] = layout.patch.0;
    let mut out = vec![T::default(); nx * ny * nz];
    for (patch, o) in patches.iter().zip(&layout.origins) {
        let src = patch.data();
        for dz in 0..pz.min(nz.saturating_sub(o[2])) {
            for dy in 0..py.min(ny.saturating_sub(o[1])) {
                let w = px.min(nx.saturating_sub(o[0]));
                let dst = ((o[2] + dz) * ny + o[1] + dy) * nx + o[0];
                let s = (dz * py + dy) * px;
                out[dst..dst + w].copy_from_slice(&src[s..s + w]);
            }
        }
    }
    Ok(Volume::from_parts(layout.dims, layout.output_spacing(patches), out))
}

/// Visits every (output index, patch index, weight key) covered by the layout,
/// patch by patch in layout order, restricted to the unpadded volume.
fn for_each_covered(layout: &PatchLayout, mut f: impl FnMut(usize, usize, usize, [usize; 3])) {
    let [nx, ny, nz] = layout.dims;
    let [px, py, _] = layout.patch.0;
    for (k, o) in layout.origins.iter().enumerate() {
        let [ex, ey, ez] = [
            layout.patch.0[0].min(nx.saturating_sub(o[0])),
            layout.patch.0[1].min(ny.saturating_sub(o[1])),
            layout.patch.0[2].min(nz.saturating_sub(o[2])),
        ];
        for dz in 0..ez {
            for dy in 0..ey {
                let dst = ((o[2] + dz) * ny + o[1] + dy) * nx + o[0];
                let src = (dz * py + dy) * px;
                for dx in 0..ex {
                    f(dst + dx, k, src + dx, [dx, dy, dz]);
                }
            }
        }
    }
}

/// Averages 50%-overlapping patch predictions voxel by voxel.
pub fn reconstruct_overlap_mean(patches: &[Volume<f32>], layout: &PatchLayout) -> Result<Volume<f32>, PatchError> {
    layout.expect_overlap(Overlap::Half)?;
    layout.check_patches(patches)?;
    let n: usize = layout.dims.iter().product();
    let mut sum = vec![0f64; n];
    let mut count = vec![0u32; n];
    for_each_covered(layout, |dst, k, src, _| {
        sum[dst] += f64::from(patches[k].data()[src]);
        count[dst] += 1;
    });
    let data = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| (s / f64::from(c)) as f32)
        .collect();
    Ok(Volume::from_parts(layout.dims, layout.output_spacing(patches), data))
}

/// Second-order spline window of even `length`.
///
/// Sample `i` of the lower half sits at `t = (i + 0.5) * 2 / length` and takes
/// `2t^2` for `t <= 0.5`, `1 - 2(1 - t)^2` above; the upper half mirrors it.
/// Copies shifted by `length / 2` sum to one.
pub fn spline_window_1d(length: usize) -> Result<Vec<f64>, PatchError> {
    if length < 2 || length % 2 != 0 {
        return Err(PatchError::OddLength(length));
    }
    let half = length / 2;
    let mut w = vec![0f64; length];
    for i in 0..half {
        let t = (i as f64 + 0.5) * 2.0 / length as f64;
        let v = if t <= 0.5 {
            2.0 * t * t
        } else {
            1.0 - 2.0 * (1.0 - t) * (1.0 - t)
        };
        w[i] = v;
        w[length - 1 - i] = v;
    }
    Ok(w)
}

/// Per-axis blending weights; axes with extent 1 do not overlap and get unit weight.
fn axis_weights(patch: PatchShape) -> Result<[Vec<f64>; 3], PatchError> {
    let weights = |len: usize| {
        if len == 1 {
            Ok(vec![1.0])
        } else {
            spline_window_1d(len)
        }
    };
    Ok([
        weights(patch.0[0])?,
        weights(patch.0[1])?,
        weights(patch.0[2])?,
    ])
}

/// Weighted overlap-add of 50%-overlapping patches with the separable spline window,
/// normalized by the accumulated weight at each voxel.
pub fn reconstruct_blend(patches: &[Volume<f32>], layout: &PatchLayout) -> Result<Volume<f32>, PatchError> {
    layout.expect_overlap(Overlap::Half)?;
    layout.check_patches(patches)?;
    let [wx, wy, wz] = axis_weights(layout.patch)?;
    let n: usize = layout.dims.iter().product();
    let mut num = vec![0f64; n];
    let mut den = vec![0f64; n];
    for_each_covered(layout, |dst, k, src, [dx, dy, dz]| {
        let w = wx[dx] * wy[dy] * wz[dz];
        num[dst] += w * f64::from(patches[k].data()[src]);
        den[dst] += w;
    });
    let data = num
        .iter()
        .zip(&den)
        .map(|(&a, &b)| (a / b) as f32)
        .collect();
    Ok(Volume::from_parts(layout.dims, layout.output_spacing(patches), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(x: usize, y: usize, z: usize) -> PatchShape {
        PatchShape::new(x, y, z).unwrap()
    }

    #[test]
    fn grid_1024_by_768() {
        let l = plan_grid([1024, 768, 1], shape(256, 256, 1), Overlap::None).unwrap();
        assert_eq!(l.origins.len(), 12);
        assert_eq!(l.padding, [0, 0, 0]);
        assert_eq!(l.origins[0], [0, 0, 0]);
        assert_eq!(l.origins[1], [256, 0, 0]);
        assert_eq!(l.origins[4], [0, 256, 0]);
        l.validate().unwrap();
    }

    #[test]
    fn shape_text() {
        assert_eq!("256x256".parse::<PatchShape>().unwrap(), shape(256, 256, 1));
        assert_eq!("64x64x16".parse::<PatchShape>().unwrap().to_string(), "64x64x16");
        assert!("64x0".parse::<PatchShape>().is_err());
        assert!("64".parse::<PatchShape>().is_err());
        assert!("axb".parse::<PatchShape>().is_err());
    }

    #[test]
    fn grid_single_patch() {
        let l = plan_grid([512, 512, 1], shape(512, 512, 1), Overlap::None).unwrap();
        assert_eq!(l.origins, vec![[0, 0, 0]]);
    }

    #[test]
    fn half_overlap_768_with_512() {
        let l = plan_grid([768, 512, 1], shape(512, 512, 1), Overlap::Half).unwrap();
        assert_eq!(l.stride, [256, 256, 1]);
        assert_eq!(l.padded_dims()[0], 1024);
        let xs: Vec<usize> = l.origins.iter().filter(|o| o[1] == 0).map(|o| o[0]).collect();
        assert_eq!(xs, vec![0, 256, 512]);
        // y: 512 with patch 512 also gets a second row at 256 (padded to 768).
        assert_eq!(l.padded_dims()[1], 768);
        assert_eq!(l.origins.len(), 3 * 2);
        l.validate().unwrap();
    }

    #[test]
    fn half_overlap_covers_interior_exactly_twice_per_axis() {
        let l = plan_grid([20, 14, 1], shape(8, 6, 1), Overlap::Half).unwrap();
        let [nx, ny, _] = l.dims;
        let mut cover = vec![0u32; nx * ny];
        for o in &l.origins {
            for y in o[1]..(o[1] + 6).min(ny) {
                for x in o[0]..(o[0] + 8).min(nx) {
                    cover[y * nx + x] += 1;
                }
            }
        }
        for y in 3..ny {
            for x in 4..nx {
                assert_eq!(cover[y * nx + x], 4, "at ({x},{y})");
            }
        }
    }

    #[test]
    fn patch_too_large() {
        assert_eq!(
            plan_grid([10, 10, 1], shape(16, 8, 1), Overlap::None).unwrap_err(),
            PatchError::PatchLargerThanVolume { axis: 0, patch: 16, dim: 10 }
        );
    }

    #[test]
    fn reflect_index_mirror() {
        let got: Vec<usize> = (-3..8).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect_index(5, 1), 0);
    }

    #[test]
    fn quadrants_of_4x4_ramp() {
        let v = Volume::from_fn([4, 4, 1], |x, y, _| (y * 4 + x) as u8).unwrap();
        let l = plan_grid([4, 4, 1], shape(2, 2, 1), Overlap::None).unwrap();
        let p = extract(&v, &l).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p[0].data(), &[0, 1, 4, 5]);
        assert_eq!(p[1].data(), &[2, 3, 6, 7]);
        assert_eq!(p[2].data(), &[8, 9, 12, 13]);
        assert_eq!(p[3].data(), &[10, 11, 14, 15]);
        assert_eq!(reconstruct_mosaic(&p, &l).unwrap(), v);
    }

    #[test]
    fn padding_is_reflected() {
        let v = Volume::from_fn([3, 1, 1], |x, _, _| x as u8).unwrap();
        let l = plan_grid([3, 1, 1], shape(2, 1, 1), Overlap::None).unwrap();
        assert_eq!(l.padding, [1, 0, 0]);
        let p = extract(&v, &l).unwrap();
        assert_eq!(p[1].data(), &[2, 1]);
        assert_eq!(reconstruct_mosaic(&p, &l).unwrap(), v);
    }

    #[test]
    fn constant_volume_gives_constant_patches() {
        let v = Volume::<f32>::filled([9, 7, 3], 0.25).unwrap();
        let l = plan_grid([9, 7, 3], shape(4, 4, 2), Overlap::Half).unwrap();
        for p in extract(&v, &l).unwrap() {
            assert!(p.data().iter().all(|&x| x == 0.25));
        }
    }

    #[test]
    fn overlap_mean_averages_disagreeing_patches() {
        let l = plan_grid([4, 1, 1], shape(2, 1, 1), Overlap::Half).unwrap();
        // origins 0, 1, 2 (stride 1): voxel 1 is covered by patches 0 and 1.
        assert_eq!(l.origins.len(), 4);
        let patches: Vec<_> = [0.2f32, 0.6, 0.6, 0.6]
            .iter()
            .map(|&c| Volume::filled([2, 1, 1], c).unwrap())
            .collect();
        let out = reconstruct_overlap_mean(&patches, &l).unwrap();
        assert!((out.data()[1] - 0.4).abs() < 1e-7);
        assert_eq!(out.data()[0], 0.2);
    }

    #[test]
    fn mode_contracts() {
        let v = Volume::<f32>::filled([8, 8, 1], 0.5).unwrap();
        let half = plan_grid([8, 8, 1], shape(4, 4, 1), Overlap::Half).unwrap();
        let none = plan_grid([8, 8, 1], shape(4, 4, 1), Overlap::None).unwrap();
        let ph = extract(&v, &half).unwrap();
        let pn = extract(&v, &none).unwrap();
        assert_eq!(reconstruct_mosaic(&ph, &half).unwrap_err().name(), "LayoutMismatch");
        assert!(matches!(
            reconstruct_blend(&pn, &none),
            Err(PatchError::WrongOverlap { .. })
        ));
        assert!(matches!(
            reconstruct_mosaic(&pn[1..], &none),
            Err(PatchError::WrongPatchCount { expected: 4, got: 3 })
        ));
        let other = Volume::<f32>::filled([9, 8, 1], 0.5).unwrap();
        assert!(matches!(extract(&other, &none), Err(PatchError::LayoutMismatch(_))));
    }

    #[test]
    fn spline_length_four() {
        assert_eq!(spline_window_1d(4).unwrap(), vec![0.125, 0.875, 0.875, 0.125]);
        assert_eq!(spline_window_1d(5).unwrap_err(), PatchError::OddLength(5));
        assert_eq!(spline_window_1d(0).unwrap_err(), PatchError::OddLength(0));
    }

    #[test]
    fn spline_symmetric_and_positive() {
        for len in (2..=64).step_by(2) {
            let w = spline_window_1d(len).unwrap();
            for i in 0..len {
                assert_eq!(w[i], w[len - 1 - i]);
                assert!(w[i] > 0.0);
            }
        }
    }

    #[test]
    fn blend_of_constant_patches() {
        let l = plan_grid([12, 10, 1], shape(4, 4, 1), Overlap::Half).unwrap();
        let patches = vec![Volume::<f32>::filled([4, 4, 1], 0.7).unwrap(); l.len()];
        let out = reconstruct_blend(&patches, &l).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.7).abs() < 1e-6));
    }

    #[test]
    fn blend_smooths_seams() {
        // Alternating constant predictions: the mosaic steps by 1 at each seam,
        // the blended reconstruction ramps between them.
        let dims = [32, 4, 1];
        let half = plan_grid(dims, shape(8, 4, 1), Overlap::Half).unwrap();
        let blend_in: Vec<_> = half
            .origins
            .iter()
            .map(|o| Volume::filled([8, 4, 1], ((o[0] / 4) % 2) as f32).unwrap())
            .collect();
        let blended = reconstruct_blend(&blend_in, &half).unwrap();
        let none = plan_grid(dims, shape(8, 4, 1), Overlap::None).unwrap();
        let mosaic_in: Vec<_> = none
            .origins
            .iter()
            .map(|o| Volume::filled([8, 4, 1], ((o[0] / 8) % 2) as f32).unwrap())
            .collect();
        let mosaic = reconstruct_mosaic(&mosaic_in, &none).unwrap();
        let max_jump = |v: &Volume<f32>| {
            (1..dims[0])
                .map(|x| (v.get(x, 0, 0) - v.get(x - 1, 0, 0)).abs())
                .fold(0f32, f32::max)
        };
        assert_eq!(max_jump(&mosaic), 1.0);
        assert!(max_jump(&blended) < max_jump(&mosaic));
    }

    #[test]
    fn layout_json_round_trip_and_validation() {
        let l = plan_grid([20, 14, 3], shape(8, 6, 1), Overlap::Half).unwrap();
        let back = PatchLayout::from_json(&l.to_json()).unwrap();
        assert_eq!(back, l);
        let mut broken = l.clone();
        broken.origins.swap(0, 1);
        assert!(PatchLayout::from_json(&broken.to_json()).is_err());
        let mut past = l;
        past.origins.push([100, 100, 100]);
        assert!(past.validate().is_err());
        assert!(PatchLayout::from_json("{}").is_err());
    }
}
