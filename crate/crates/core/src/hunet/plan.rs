//! Index structures (neighbor pairs, level links, attention orders) for one set of voxel rows.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grad::OffsetPairs;
use crate::voxel::{offset_id, serialize_keys, Curve, GridHierarchy, STENCIL};

/// A serialization order as gather indices: `forward[pos] = row`, `backward[row] = pos`.
#[derive(Clone, Debug)]
pub struct AttnOrder {
    pub forward: Arc<[usize]>,
    pub backward: Arc<[usize]>,
}

impl AttnOrder {
    pub fn new(keys: &[[i32; 3]], curve: Curve) -> Result<Self> {
        let order = serialize_keys(keys, curve)?;
        Ok(Self {
            backward: order.inverse().into(),
            forward: order.permutation.into(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct LevelPlan {
    pub keys: Vec<[i32; 3]>,
    pub conv: Arc<OffsetPairs>,
    orders: Vec<(Curve, AttnOrder)>,
}

impl LevelPlan {
    pub fn rows(&self) -> usize {
        self.keys.len()
    }

    pub fn order(&self, curve: Curve) -> Result<&AttnOrder> {
        self.orders
            .iter()
            .find(|(c, _)| *c == curve)
            .map(|(_, o)| o)
            .ok_or_else(|| Error::Contract(format!("no {curve:?} order planned for this level")))
    }
}

/// Structure of a (possibly subset) hierarchy, with rows renumbered `0..n` per level in the
/// order they were given.
#[derive(Clone, Debug)]
pub struct Plan {
    pub levels: Vec<LevelPlan>,
    /// `down[l]`: level `l` → `l+1`, eight octant taps.
    pub down: Vec<Arc<OffsetPairs>>,
    /// `up[l]`: level `l+1` → `l`, eight octant taps.
    pub up: Vec<Arc<OffsetPairs>>,
}

/// Submanifold 27-tap pairs over a key set.
pub fn conv_pairs(keys: &[[i32; 3]]) -> OffsetPairs {
    let index: HashMap<[i32; 3], usize> = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let mut pairs = OffsetPairs::new(STENCIL, keys.len());
    for (i, k) in keys.iter().enumerate() {
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let d = [dx, dy, dz];
                    if let Some(&j) = index.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        pairs.push(usize::from(offset_id(d)), i, j);
                    }
                }
            }
        }
    }
    pairs
}

fn octant(k: &[i32; 3]) -> usize {
    (k[0].rem_euclid(2) | (k[1].rem_euclid(2) << 1) | (k[2].rem_euclid(2) << 2)) as usize
}

/// `(down, up)` pairs linking `fine` keys to their parents in `coarse`.
pub fn level_links(fine: &[[i32; 3]], coarse: &[[i32; 3]]) -> Result<(OffsetPairs, OffsetPairs)> {
    let index: HashMap<[i32; 3], usize> =
        coarse.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let mut down = OffsetPairs::new(8, coarse.len());
    let mut up = OffsetPairs::new(8, fine.len());
    for (c, k) in fine.iter().enumerate() {
        let pk = k.map(|v| v.div_euclid(2));
        let p = *index
            .get(&pk)
            .ok_or_else(|| Error::Contract(format!("voxel {k:?} has no parent in the plan")))?;
        let o = octant(k);
        down.push(o, p, c);
        up.push(o, c, p);
    }
    Ok((down, up))
}

impl Plan {
    /// Plans the given rows of every level. `attn_curves[l]` lists the curves whose orders the
    /// model will request at level `l`.
    pub fn new(hier: &GridHierarchy, rows: &[Vec<usize>], attn_curves: &[Vec<Curve>]) -> Result<Self> {
        let n = hier.num_levels();
        if rows.len() != n || attn_curves.len() != n {
            return Err(Error::Contract(format!(
                "plan needs rows for all {n} levels"
            )));
        }
        let keys: Vec<Vec<[i32; 3]>> = rows
            .iter()
            .enumerate()
            .map(|(l, rs)| rs.iter().map(|&r| hier.levels[l].keys[r].ijk).collect())
            .collect();
        Self::from_keys(keys, attn_curves)
    }

    /// Plans every row of every level.
    pub fn full(hier: &GridHierarchy, attn_curves: &[Vec<Curve>]) -> Result<Self> {
        let keys = hier
            .levels
            .iter()
            .map(|g| g.keys.iter().map(|k| k.ijk).collect())
            .collect();
        Self::from_keys(keys, attn_curves)
    }

    pub fn from_keys(keys: Vec<Vec<[i32; 3]>>, attn_curves: &[Vec<Curve>]) -> Result<Self> {
        let mut down = Vec::new();
        let mut up = Vec::new();
        for l in 0..keys.len().saturating_sub(1) {
            let (d, u) = level_links(&keys[l], &keys[l + 1])?;
            down.push(Arc::new(d));
            up.push(Arc::new(u));
        }
        let levels = keys
            .into_iter()
            .zip(attn_curves)
            .map(|(k, curves)| {
                let mut orders: Vec<(Curve, AttnOrder)> = Vec::new();
                if !k.is_empty() {
                    for &c in curves {
                        if !orders.iter().any(|(oc, _)| *oc == c) {
                            orders.push((c, AttnOrder::new(&k, c)?));
                        }
                    }
                }
                Ok(LevelPlan {
                    conv: Arc::new(conv_pairs(&k)),
                    keys: k,
                    orders,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { levels, down, up })
    }
}
