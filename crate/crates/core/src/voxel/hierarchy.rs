use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grad::Tensor;

use super::grid::{majority_label, VoxelGrid, VoxelKey};

/// Nested grids, finest first. Level `ℓ+1` holds exactly the parents of level `ℓ`.
#[derive(Clone, Debug)]
pub struct GridHierarchy {
    pub levels: Vec<VoxelGrid>,
    /// `child_of[ℓ][coarse_row]` lists rows of level `ℓ` under that row of level `ℓ+1`.
    pub child_of: Vec<Vec<Vec<usize>>>,
    /// `parent_of[ℓ][fine_row]` is the level-`ℓ+1` row containing that row of level `ℓ`.
    pub parent_of: Vec<Vec<usize>>,
}

impl GridHierarchy {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &VoxelGrid {
        &self.levels[l]
    }

    /// Row at `target` level containing `row` of level `from`.
    pub fn ancestor(&self, from: usize, row: usize, target: usize) -> usize {
        (from..target).fold(row, |r, l| self.parent_of[l][r])
    }
}

/// Pools a level-0 grid into `num_levels` nested grids by repeated floor-halving.
pub fn build_hierarchy(grid: &VoxelGrid, num_levels: usize) -> Result<GridHierarchy> {
    if num_levels < 2 {
        return Err(Error::Contract(format!(
            "a hierarchy needs at least 2 levels, got {num_levels}"
        )));
    }
    let mut levels = vec![grid.clone()];
    let mut child_of = Vec::with_capacity(num_levels - 1);
    let mut parent_of = Vec::with_capacity(num_levels - 1);
    for l in 0..num_levels - 1 {
        let fine = &levels[l];
        let mut parents: Vec<VoxelKey> = fine.keys.iter().map(VoxelKey::parent).collect();
        parents.sort_unstable();
        parents.dedup();
        let key_index: HashMap<[i32; 3], usize> =
            parents.iter().enumerate().map(|(i, k)| (k.ijk, i)).collect();
        let n = parents.len();
        let mut children = vec![Vec::new(); n];
        let mut up = Vec::with_capacity(fine.len());
        for (r, k) in fine.keys.iter().enumerate() {
            let p = key_index[&k.parent().ijk];
            children[p].push(r);
            up.push(p);
        }
        let c = fine.channels();
        let mut feats = vec![0.0; n * c];
        let mut source_points = Vec::with_capacity(n);
        for (p, kids) in children.iter().enumerate() {
            let mut pts: Vec<u32> = kids
                .iter()
                .flat_map(|&k| fine.source_points[k].iter().copied())
                .collect();
            pts.sort_unstable();
            // point-weighted mean equals the mean over all contributing points
            let total = pts.len().max(1) as f64;
            let dst = &mut feats[p * c..(p + 1) * c];
            for &k in kids {
                let w = fine.source_points[k].len() as f64 / total;
                dst.iter_mut()
                    .zip(fine.features.row(k))
                    .for_each(|(d, &v)| *d += w * v);
            }
            source_points.push(pts);
        }
        let labels = children
            .iter()
            .map(|kids| {
                majority_label(kids.iter().flat_map(|&k| {
                    std::iter::repeat_n(fine.labels[k], fine.source_points[k].len())
                }))
            })
            .collect();
        let point_map = fine.point_map.iter().map(|r| r.map(|r| up[r])).collect();
        let coarse = VoxelGrid {
            level: l + 1,
            voxel_size: fine.voxel_size * 2.0,
            keys: parents,
            key_index,
            features: Tensor::new(vec![n, c], feats)?,
            labels,
            point_map,
            source_points,
        };
        levels.push(coarse);
        child_of.push(children);
        parent_of.push(up);
    }
    Ok(GridHierarchy {
        levels,
        child_of,
        parent_of,
    })
}
