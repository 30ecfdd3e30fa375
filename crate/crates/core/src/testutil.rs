//! Proptest strategies shared by the module tests.

use proptest::prelude::*;

use crate::volume::{BinaryMask, Dims, Volume, UNIT_SPACING};

pub fn dims(max: Dims) -> impl Strategy<Value = Dims> {
    (1..=max[0], 1..=max[1], 1..=max[2]).prop_map(|(x, y, z)| [x, y, z])
}

fn voxels(d: Dims) -> usize {
    d.iter().product()
}

pub fn volume_u8(max: Dims) -> impl Strategy<Value = Volume<u8>> {
    dims(max).prop_flat_map(|d| {
        prop::collection::vec(any::<u8>(), voxels(d)).prop_map(move |v| Volume::new(d, UNIT_SPACING, v).unwrap())
    })
}

/// Values in `[0, 1]`.
pub fn volume_f32(max: Dims) -> impl Strategy<Value = Volume<f32>> {
    dims(max).prop_flat_map(|d| {
        prop::collection::vec(0f32..=1.0, voxels(d)).prop_map(move |v| Volume::new(d, UNIT_SPACING, v).unwrap())
    })
}

fn mask_of(d: Dims, bits: Vec<bool>) -> BinaryMask {
    BinaryMask::new(Volume::new(d, UNIT_SPACING, bits.into_iter().map(u8::from).collect()).unwrap()).unwrap()
}

pub fn mask(max: Dims) -> impl Strategy<Value = BinaryMask> {
    dims(max).prop_flat_map(|d| prop::collection::vec(any::<bool>(), voxels(d)).prop_map(move |b| mask_of(d, b)))
}

pub fn mask_pair(max: Dims) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    dims(max).prop_flat_map(|d| {
        let n = voxels(d);
        (
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(a, b)| (mask_of(d, a), mask_of(d, b)))
    })
}
