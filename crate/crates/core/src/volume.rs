//! Dense 3D scalar volumes.
//!
//! A [`Volume`] stores voxels in a flat buffer with x varying fastest, then
//! y, then z. The voxel type is fixed at the type level through [`Voxel`];
//! [`AnyVolume`] is the dtype-erased form used at I/O boundaries.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Voxel counts along (x, y, z).
pub type Dims = [usize; 3];

/// Physical voxel size along (x, y, z) in nanometers.
pub type Spacing = [f32; 3];

pub const UNIT_SPACING: Spacing = [1.0, 1.0, 1.0];

/// On-disk and in-memory element type tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    F32,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::U8 => 0,
            Dtype::F32 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::U8),
            1 => Some(Dtype::F32),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dtype::U8 => f.write_str("u8"),
            Dtype::F32 => f.write_str("f32"),
        }
    }
}

/// Scalar element types a [`Volume`] can hold.
pub trait Voxel: Copy + Default + PartialEq + PartialOrd + Send + Sync + fmt::Debug + 'static {
    const DTYPE: Dtype;

    fn to_f64(self) -> f64;

    /// Nearest representable value, saturating at the type bounds.
    fn from_f64(v: f64) -> Self;

    /// Total order used by median filters; for floats this is IEEE total order.
    fn total_cmp(&self, other: &Self) -> Ordering;

    fn extend_le_bytes(data: &[Self], out: &mut Vec<u8>);

    /// Decodes `bytes.len() / DTYPE.size()` little-endian values.
    fn from_le_bytes(bytes: &[u8]) -> Vec<Self>;
}

impl Voxel for u8 {
    const DTYPE: Dtype = Dtype::U8;

    fn to_f64(self) -> f64 {
        f64::from(self)
    }

    fn from_f64(v: f64) -> Self {
        v.round().clamp(0.0, 255.0) as u8
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }

    fn extend_le_bytes(data: &[Self], out: &mut Vec<u8>) {
        out.extend_from_slice(data);
    }

    fn from_le_bytes(bytes: &[u8]) -> Vec<Self> {
        bytes.to_vec()
    }
}

impl Voxel for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn to_f64(self) -> f64 {
        f64::from(self)
    }

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        f32::total_cmp(self, other)
    }

    fn extend_le_bytes(data: &[Self], out: &mut Vec<u8>) {
        out.reserve(data.len() * 4);
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn from_le_bytes(bytes: &[u8]) -> Vec<Self> {
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolumeError {
    #[error("dimension is zero or voxel count overflows: {0:?}")]
    DimOverflow(Vec<u64>),
    #[error("buffer holds {got} voxels but dims require {expected}")]
    BufferLength { expected: usize, got: usize },
    #[error("voxel spacing must be finite and > 0, got {0:?}")]
    InvalidSpacing(Spacing),
    #[error("voxel {index} has value {value}, expected 0 or 1")]
    NotBinary { index: usize, value: u8 },
    #[error("voxel {index} has value {value}, expected a probability in [0, 1]")]
    OutOfRangeProbability { index: usize, value: f32 },
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimMismatch { left: Dims, right: Dims },
    #[error("replication factor must be >= 1")]
    InvalidFactor,
}

impl VolumeError {
    /// Stable machine-readable name of the error variant.
    pub fn name(&self) -> &'static str {
        match self {
            VolumeError::DimOverflow(_) => "DimOverflow",
            VolumeError::BufferLength { .. } => "BufferLength",
            VolumeError::InvalidSpacing(_) => "InvalidSpacing",
            VolumeError::NotBinary { .. } => "NotBinary",
            VolumeError::OutOfRangeProbability { .. } => "OutOfRangeProbability",
            VolumeError::InvalidThreshold(_) => "InvalidThreshold",
            VolumeError::DimMismatch { .. } => "DimMismatch",
            VolumeError::InvalidFactor => "InvalidFactor",
        }
    }
}

/// Number of voxels for `dims`, rejecting zero extents and overflow.
pub fn voxel_count(dims: Dims) -> Result<usize, VolumeError> {
    let overflow = || VolumeError::DimOverflow(dims.iter().map(|&d| d as u64).collect());
    if dims.contains(&0) {
        return Err(overflow());
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(overflow)
}

fn check_spacing(spacing: Spacing) -> Result<(), VolumeError> {
    if spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(VolumeError::InvalidSpacing(spacing))
    }
}

#[derive(Clone, PartialEq)]
pub struct Volume<T> {
    dims: Dims,
    spacing: Spacing,
    data: Vec<T>,
}

impl<T: Voxel> fmt::Debug for Volume<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Volume")
            .field("dtype", &T::DTYPE)
            .field("dims", &self.dims)
            .field("spacing", &self.spacing)
            .finish_non_exhaustive()
    }
}

impl<T: Voxel> Volume<T> {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<T>) -> Result<Self, VolumeError> {
        let expected = voxel_count(dims)?;
        check_spacing(spacing)?;
        if data.len() != expected {
            return Err(VolumeError::BufferLength {
                expected,
                got: data.len(),
            });
        }
        Ok(Volume {
            dims,
            spacing,
            data,
        })
    }

    pub fn filled(dims: Dims, value: T) -> Result<Self, VolumeError> {
        let n = voxel_count(dims)?;
        Ok(Volume {
            dims,
            spacing: UNIT_SPACING,
            data: vec![value; n],
        })
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self, VolumeError> {
        let n = voxel_count(dims)?;
        let mut data = Vec::with_capacity(n);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Ok(Volume {
            dims,
            spacing: UNIT_SPACING,
            data,
        })
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Result<Self, VolumeError> {
        check_spacing(spacing)?;
        self.spacing = spacing;
        Ok(self)
    }

    /// Internal constructor for buffers whose length is already known to match.
    pub(crate) fn from_parts(dims: Dims, spacing: Spacing, data: Vec<T>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Volume {
            dims,
            spacing,
            data,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn dtype(&self) -> Dtype {
        T::DTYPE
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.index(x, y, z);
        self.data[i] = value;
    }

    pub fn slice_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    /// The voxels of z-slice `z`, row-major with x fastest.
    pub fn slice(&self, z: usize) -> &[T] {
        let n = self.slice_len();
        &self.data[z * n..(z + 1) * n]
    }

    pub fn map<U: Voxel>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn ensure_same_dims<U: Voxel>(&self, other: &Volume<U>) -> Result<(), VolumeError> {
        if self.dims == other.dims {
            Ok(())
        } else {
            Err(VolumeError::DimMismatch {
                left: self.dims,
                right: other.dims,
            })
        }
    }

    /// Concatenates `factor` copies of the volume along z.
    pub fn replicate_slices(&self, factor: usize) -> Result<Self, VolumeError> {
        if factor == 0 {
            return Err(VolumeError::InvalidFactor);
        }
        let nz = self.dims[2].checked_mul(factor).ok_or_else(|| {
            VolumeError::DimOverflow(vec![
                self.dims[0] as u64,
                self.dims[1] as u64,
                (self.dims[2] as u64).saturating_mul(factor as u64),
            ])
        })?;
        let dims = [self.dims[0], self.dims[1], nz];
        voxel_count(dims)?;
        Ok(Volume {
            dims,
            spacing: self.spacing,
            data: self.data.repeat(factor),
        })
    }
}

impl Volume<f32> {
    /// Checks every voxel lies in `[0, 1]` (NaN fails).
    pub fn check_probabilities(&self) -> Result<(), VolumeError> {
        match self
            .data
            .iter()
            .position(|v| !(0.0..=1.0).contains(v))
        {
            None => Ok(()),
            Some(index) => Err(VolumeError::OutOfRangeProbability {
                index,
                value: self.data[index],
            }),
        }
    }

    /// Foreground where `p >= threshold`.
    pub fn binarize(&self, threshold: f64) -> Result<BinaryMask, VolumeError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(VolumeError::InvalidThreshold(threshold));
        }
        self.check_probabilities()?;
        Ok(BinaryMask(
            self.map(|p| u8::from(f64::from(p) >= threshold)),
        ))
    }
}

/// A `u8` volume whose voxels are all 0 (background) or 1 (foreground).
#[derive(Clone, PartialEq)]
pub struct BinaryMask(Volume<u8>);

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("BinaryMask").field(&self.0).finish()
    }
}

impl BinaryMask {
    pub fn new(volume: Volume<u8>) -> Result<Self, VolumeError> {
        if let Some(index) = volume.data.iter().position(|&v| v > 1) {
            return Err(VolumeError::NotBinary {
                index,
                value: volume.data[index],
            });
        }
        Ok(BinaryMask(volume))
    }

    /// Treats any non-zero voxel as foreground.
    pub fn from_nonzero(volume: &Volume<u8>) -> Self {
        BinaryMask(volume.map(|v| u8::from(v != 0)))
    }

    pub fn empty(dims: Dims) -> Result<Self, VolumeError> {
        Ok(BinaryMask(Volume::filled(dims, 0)?))
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Result<Self, VolumeError> {
        Ok(BinaryMask(Volume::from_fn(dims, |x, y, z| u8::from(f(x, y, z)))?))
    }

    pub(crate) fn from_volume_unchecked(volume: Volume<u8>) -> Self {
        debug_assert!(volume.data.iter().all(|&v| v <= 1));
        BinaryMask(volume)
    }

    pub fn volume(&self) -> &Volume<u8> {
        &self.0
    }

    pub fn into_volume(self) -> Volume<u8> {
        self.0
    }

    pub fn dims(&self) -> Dims {
        self.0.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.0.data
    }

    pub fn is_set(&self, x: usize, y: usize, z: usize) -> bool {
        self.0.get(x, y, z) == 1
    }

    pub fn count_foreground(&self) -> u64 {
        self.0.data.iter().map(|&v| u64::from(v)).sum()
    }

    pub fn complement(&self) -> Self {
        BinaryMask(self.0.map(|v| 1 - v))
    }

    /// `true` if every foreground voxel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims()
            && self
                .0
                .data
                .iter()
                .zip(&other.0.data)
                .all(|(&a, &b)| a <= b)
    }
}

/// A volume of either supported dtype, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyVolume {
    U8(Volume<u8>),
    F32(Volume<f32>),
}

impl AnyVolume {
    pub fn dims(&self) -> Dims {
        match self {
            AnyVolume::U8(v) => v.dims(),
            AnyVolume::F32(v) => v.dims(),
        }
    }

    pub fn spacing(&self) -> Spacing {
        match self {
            AnyVolume::U8(v) => v.spacing(),
            AnyVolume::F32(v) => v.spacing(),
        }
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            AnyVolume::U8(_) => Dtype::U8,
            AnyVolume::F32(_) => Dtype::F32,
        }
    }
}

impl From<Volume<u8>> for AnyVolume {
    fn from(v: Volume<u8>) -> Self {
        AnyVolume::U8(v)
    }
}

impl From<Volume<f32>> for AnyVolume {
    fn from(v: Volume<f32>) -> Self {
        AnyVolume::F32(v)
    }
}

impl From<BinaryMask> for AnyVolume {
    fn from(m: BinaryMask) -> Self {
        AnyVolume::U8(m.into_volume())
    }
}
