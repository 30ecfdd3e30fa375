//! Lossless flips and quarter-turn rotations, and the test-time augmentation groups built from them.

use serde::{Deserialize, Serialize};

use crate::volume::{Volume, Voxel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Mirrors the volume along `axis`.
pub fn flip<T: Voxel>(v: &Volume<T>, axis: Axis) -> Volume<T> {
    let [nx, ny, nz] = v.dims();
    let src = v.data();
    let mut out = Vec::with_capacity(src.len());
    for z in 0..nz {
        let sz = if axis == Axis::Z { nz - 1 - z } else { z };
        for y in 0..ny {
            let sy = if axis == Axis::Y { ny - 1 - y } else { y };
            let row = &src[(sz * ny + sy) * nx..(sz * ny + sy + 1) * nx];
            if axis == Axis::X {
                out.extend(row.iter().rev());
            } else {
                out.extend_from_slice(row);
            }
        }
    }
    Volume::from_parts(v.dims(), v.spacing(), out)
}

/// Rotates every z-slice by `k * 90` degrees counter-clockwise, as displayed
/// with x to the right and y downward. Odd `k` swaps the x and y extents.
///
/// For `k = 1` the slice `[[a, b], [c, d]]` (rows are y) becomes `[[b, d], [a, c]]`.
pub fn square_rotation<T: Voxel>(v: &Volume<T>, k: u8) -> Volume<T> {
    let k = k % 4;
    if k == 0 {
        return v.clone();
    }
    let [nx, ny, nz] = v.dims();
    let [sx, sy, sz] = v.spacing();
    let (ox, oy, spacing) = if k % 2 == 1 {
        (ny, nx, [sy, sx, sz])
    } else {
        (nx, ny, [sx, sy, sz])
    };
    let src = v.data();
    let mut out = Vec::with_capacity(src.len());
    for z in 0..nz {
        let base = z * nx * ny;
        for y in 0..oy {
            for x in 0..ox {
                let (ix, iy) = match k {
                    1 => (nx - 1 - y, x),
                    2 => (nx - 1 - x, ny - 1 - y),
                    _ => (y, ny - 1 - x),
                };
                out.push(src[base + iy * nx + ix]);
            }
        }
    }
    Volume::from_parts([ox, oy, nz], spacing, out)
}

/// One element of the flip/rotation group used for test-time augmentation.
///
/// The action is: mirror x (if `flip_x`), rotate each slice by `rot90`
/// quarter turns, then mirror z (if `flip_z`). 2D transforms never flip z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rot90: u8,
    pub flip_x: bool,
    pub flip_z: bool,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rot90: 0,
        flip_x: false,
        flip_z: false,
    };

    /// Position in the canonical 16-element ordering; the 2D group is the first 8.
    pub fn id(&self) -> usize {
        usize::from(self.rot90 % 4) + 4 * usize::from(self.flip_x) + 8 * usize::from(self.flip_z)
    }

    pub fn from_id(id: usize) -> Option<Self> {
        (id < 16).then(|| RigidTransform {
            rot90: (id % 4) as u8,
            flip_x: (id / 4) % 2 == 1,
            flip_z: id / 8 == 1,
        })
    }

    pub fn inverse(&self) -> Self {
        if self.flip_x {
            // Rotation conjugated by a mirror is the opposite rotation, so every
            // mirrored element is its own inverse.
            *self
        } else {
            RigidTransform {
                rot90: (4 - self.rot90 % 4) % 4,
                ..*self
            }
        }
    }

    /// The transform equivalent to applying `self` and then `then`.
    pub fn then(&self, then: &RigidTransform) -> RigidTransform {
        // Normal form R^k F^f; F R^k = R^-k F.
        let (k1, f1) = (i32::from(self.rot90), self.flip_x);
        let (k2, f2) = (i32::from(then.rot90), then.flip_x);
        let k = if f2 { k2 - k1 } else { k2 + k1 };
        RigidTransform {
            rot90: k.rem_euclid(4) as u8,
            flip_x: f1 ^ f2,
            flip_z: self.flip_z ^ then.flip_z,
        }
    }

    pub fn label(&self) -> String {
        format!(
            "rot{}{}{}",
            u16::from(self.rot90 % 4) * 90,
            if self.flip_x { "+flipx" } else { "" },
            if self.flip_z { "+flipz" } else { "" }
        )
    }
}

/// Canonical TTA group: 8 elements for 2D, 16 for 3D, identity first.
///
/// Order is rotation fastest, then x-mirror, then z-mirror, so element `i` has
/// [`RigidTransform::id`] equal to `i`.
pub fn enumerate_tta(dimensionality: u8) -> Option<Vec<RigidTransform>> {
    let n = match dimensionality {
        2 => 8,
        3 => 16,
        _ => return None,
    };
    Some((0..n).filter_map(RigidTransform::from_id).collect())
}

pub fn apply_rigid<T: Voxel>(v: &Volume<T>, t: &RigidTransform) -> Volume<T> {
    let mut out = if t.flip_x { flip(v, Axis::X) } else { v.clone() };
    if t.rot90 % 4 != 0 {
        out = square_rotation(&out, t.rot90);
    }
    if t.flip_z {
        out = flip(&out, Axis::Z);
    }
    out
}

pub fn invert_rigid(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}
