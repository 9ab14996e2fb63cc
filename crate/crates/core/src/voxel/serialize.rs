//! Space-filling-curve orderings of a grid's voxels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::VoxelGrid;

/// Bits per axis used when serializing a grid.
pub const CODE_BITS: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Curve {
    /// Morton order, x least significant.
    Z,
    /// Morton order over the rotated axes (y, z, x).
    TZ,
    /// Hilbert order.
    H,
    /// Hilbert order over the rotated axes (y, z, x).
    TH,
}

impl Curve {
    pub const CYCLE: [Curve; 4] = [Curve::Z, Curve::TZ, Curve::H, Curve::TH];

    pub fn code(self, xyz: [u32; 3], bits: u32) -> u64 {
        let [x, y, z] = xyz;
        match self {
            Curve::Z => morton3([x, y, z], bits),
            Curve::TZ => morton3([y, z, x], bits),
            Curve::H => hilbert3([x, y, z], bits),
            Curve::TH => hilbert3([y, z, x], bits),
        }
    }
}

/// Interleaves `bits` low bits of each axis; axis 0 takes the least significant slot.
pub fn morton3(c: [u32; 3], bits: u32) -> u64 {
    let mut code = 0u64;
    for b in 0..bits {
        for (a, &v) in c.iter().enumerate() {
            code |= u64::from((v >> b) & 1) << (3 * b + a as u32);
        }
    }
    code
}

/// Hilbert index of a point in a `2^bits` cube (Skilling's transpose algorithm).
pub fn hilbert3(c: [u32; 3], bits: u32) -> u64 {
    let mut x = c;
    if bits == 0 {
        return 0;
    }
    let m = 1u32 << (bits - 1);
    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..3 {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }
    for i in 1..3 {
        x[i] ^= x[i - 1];
    }
    let mut t = 0;
    q = m;
    while q > 1 {
        if x[2] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for v in &mut x {
        *v ^= t;
    }
    let mut h = 0u64;
    for b in (0..bits).rev() {
        for v in &x {
            h = (h << 1) | u64::from((v >> b) & 1);
        }
    }
    h
}

/// Row ordering of one grid along a curve.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SerializationOrder {
    pub curve: Curve,
    /// `permutation[position] = row`.
    pub permutation: Vec<usize>,
}

impl SerializationOrder {
    /// `inverse()[row] = position`.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.permutation.len()];
        for (pos, &row) in self.permutation.iter().enumerate() {
            inv[row] = pos;
        }
        inv
    }
}

/// Offsets keys to be non-negative from the grid's minimum corner.
pub fn offset_coords(keys: &[[i32; 3]], bits: u32) -> Result<Vec<[u32; 3]>> {
    let mut lo = [i64::MAX; 3];
    for k in keys {
        for a in 0..3 {
            lo[a] = lo[a].min(i64::from(k[a]));
        }
    }
    let limit = 1i64 << bits;
    keys.iter()
        .map(|k| {
            let mut out = [0u32; 3];
            for a in 0..3 {
                let v = i64::from(k[a]) - lo[a];
                if v >= limit {
                    return Err(Error::Range(format!(
                        "key {k:?} spans more than {bits} bits per axis"
                    )));
                }
                out[a] = v as u32;
            }
            Ok(out)
        })
        .collect()
}

pub fn serialize(grid: &VoxelGrid, curve: Curve) -> Result<SerializationOrder> {
    let keys: Vec<[i32; 3]> = grid.keys.iter().map(|k| k.ijk).collect();
    serialize_keys(&keys, curve)
}

pub fn serialize_keys(keys: &[[i32; 3]], curve: Curve) -> Result<SerializationOrder> {
    let coords = offset_coords(keys, CODE_BITS)?;
    let mut coded: Vec<(u64, usize)> = coords
        .iter()
        .enumerate()
        .map(|(r, &c)| (curve.code(c, CODE_BITS), r))
        .collect();
    coded.sort_unstable();
    Ok(SerializationOrder {
        curve,
        permutation: coded.into_iter().map(|(_, r)| r).collect(),
    })
}
