use std::collections::HashMap;

use crate::error::{shape_err, Error, Result};
use crate::grad::Tensor;

/// Integer voxel coordinates at one hierarchy level (0 = finest).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelKey {
    pub ijk: [i32; 3],
    pub level: u8,
}

impl VoxelKey {
    pub fn new(ijk: [i32; 3], level: u8) -> Self {
        Self { ijk, level }
    }

    /// Key of the enclosing voxel one level coarser.
    pub fn parent(&self) -> Self {
        Self {
            ijk: self.ijk.map(|c| c.div_euclid(2)),
            level: self.level + 1,
        }
    }

    /// Which of the parent's eight octants this key occupies, `x | y<<1 | z<<2`.
    pub fn octant(&self) -> usize {
        let b = self.ijk.map(|c| c.rem_euclid(2) as usize);
        b[0] | (b[1] << 1) | (b[2] << 2)
    }
}

/// One resolution of a sparse scene. Only occupied voxels exist.
#[derive(Clone, Debug)]
pub struct VoxelGrid {
    pub level: usize,
    pub voxel_size: f64,
    pub keys: Vec<VoxelKey>,
    pub key_index: HashMap<[i32; 3], usize>,
    /// Per-voxel mean of contributing point attributes.
    pub features: Tensor<f64>,
    /// Per-voxel majority label (−1 when every contributing point is ignored).
    pub labels: Vec<i32>,
    /// Per source point, the voxel row holding it. `None` for points outside this grid
    /// (only possible after cropping).
    pub point_map: Vec<Option<usize>>,
    /// Per voxel, ascending ids of the source points inside it.
    pub source_points: Vec<Vec<u32>>,
}

impl VoxelGrid {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn row_of(&self, ijk: &[i32; 3]) -> Option<usize> {
        self.key_index.get(ijk).copied()
    }

    /// Center of a voxel in scene coordinates.
    pub fn center(&self, row: usize) -> [f64; 3] {
        let s = self.voxel_size;
        self.keys[row].ijk.map(|c| (f64::from(c) + 0.5) * s)
    }

    pub fn channels(&self) -> usize {
        self.features.cols()
    }

    /// Number of source points inside each voxel.
    pub fn point_count(&self, row: usize) -> usize {
        self.source_points[row].len()
    }

    /// Grid restricted to `rows` (kept in the given order), with remapped indices.
    pub fn subset(&self, rows: &[usize]) -> Result<VoxelGrid> {
        if rows.is_empty() {
            return Err(Error::EmptyScene("subset of zero voxels".into()));
        }
        let keys: Vec<VoxelKey> = rows.iter().map(|&r| self.keys[r]).collect();
        let key_index = keys.iter().enumerate().map(|(i, k)| (k.ijk, i)).collect();
        let features = self.features.select_rows(rows)?;
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        let source_points: Vec<Vec<u32>> = rows.iter().map(|&r| self.source_points[r].clone()).collect();
        let mut point_map = vec![None; self.point_map.len()];
        for (new_row, pts) in source_points.iter().enumerate() {
            for &p in pts {
                point_map[p as usize] = Some(new_row);
            }
        }
        Ok(VoxelGrid {
            level: self.level,
            voxel_size: self.voxel_size,
            keys,
            key_index,
            features,
            labels,
            point_map,
            source_points,
        })
    }
}

/// Majority vote over non-negative labels; ties go to the smallest id, all-ignored gives −1.
pub(crate) fn majority_label(labels: impl Iterator<Item = i32>) -> i32 {
    let mut counts: Vec<(i32, usize)> = Vec::new();
    for l in labels.filter(|&l| l >= 0) {
        match counts.iter_mut().find(|(c, _)| *c == l) {
            Some((_, n)) => *n += 1,
            None => counts.push((l, 1)),
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(l, _)| l)
        .unwrap_or(-1)
}

fn floor_key(p: &[f64; 3], size: f64) -> Result<[i32; 3]> {
    let mut out = [0i32; 3];
    for a in 0..3 {
        let f = (p[a] / size).floor();
        if !f.is_finite() || f < f64::from(i32::MIN) || f > f64::from(i32::MAX) {
            return Err(Error::Range(format!("position {p:?} does not fit a voxel key")));
        }
        out[a] = f as i32;
    }
    Ok(out)
}

/// Quantizes points into the occupied voxels of a level-0 grid.
///
/// `attributes` is `[N, C]`; each voxel stores the mean of its points' rows. Keys are kept in
/// ascending lexicographic order, independent of the input point order.
pub fn voxelize(
    positions: &[[f64; 3]],
    attributes: &Tensor<f64>,
    labels: &[i32],
    voxel_size: f64,
) -> Result<VoxelGrid> {
    if positions.is_empty() {
        return Err(Error::EmptyScene("voxelize called with no points".into()));
    }
    if !(voxel_size > 0.0) {
        return Err(Error::Contract(format!("voxel size must be positive, got {voxel_size}")));
    }
    if attributes.rows() != positions.len() || labels.len() != positions.len() {
        return shape_err(format!(
            "{} positions, {} attribute rows, {} labels",
            positions.len(),
            attributes.rows(),
            labels.len()
        ));
    }
    let point_keys: Vec<[i32; 3]> = positions
        .iter()
        .map(|p| floor_key(p, voxel_size))
        .collect::<Result<_>>()?;
    let mut uniq = point_keys.clone();
    uniq.sort_unstable();
    uniq.dedup();
    let key_index: HashMap<[i32; 3], usize> = uniq.iter().enumerate().map(|(i, k)| (*k, i)).collect();

    let n = uniq.len();
    let mut source_points = vec![Vec::new(); n];
    let mut point_map = Vec::with_capacity(positions.len());
    for (p, k) in point_keys.iter().enumerate() {
        let row = key_index[k];
        source_points[row].push(p as u32);
        point_map.push(Some(row));
    }
    let c = attributes.cols();
    let mut feats = vec![0.0; n * c];
    for (row, pts) in source_points.iter().enumerate() {
        let dst = &mut feats[row * c..(row + 1) * c];
        for &p in pts {
            dst.iter_mut()
                .zip(attributes.row(p as usize))
                .for_each(|(d, &v)| *d += v);
        }
        let inv = 1.0 / pts.len() as f64;
        dst.iter_mut().for_each(|d| *d *= inv);
    }
    let vox_labels = source_points
        .iter()
        .map(|pts| majority_label(pts.iter().map(|&p| labels[p as usize])))
        .collect();
    Ok(VoxelGrid {
        level: 0,
        voxel_size,
        keys: uniq.into_iter().map(|k| VoxelKey::new(k, 0)).collect(),
        key_index,
        features: Tensor::new(vec![n, c], feats)?,
        labels: vox_labels,
        point_map,
        source_points,
    })
}
