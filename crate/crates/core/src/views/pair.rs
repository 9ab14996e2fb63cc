use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for};
use crate::scene::PointCloud;
use crate::voxel::{build_hierarchy, voxelize, GridHierarchy, VoxelGrid};

use super::{augment, make_mask, AugConfig, MaskSpec};

/// Grows a crop from a random seed voxel: voxels are taken nearest-center-first until the
/// number of contributing source points reaches `max_points` or the grid is exhausted.
/// Selected voxels keep their original relative order.
pub fn crop(grid: &VoxelGrid, max_points: usize, seed: u64) -> Result<VoxelGrid> {
    if max_points == 0 {
        return Err(Error::Contract("crop needs max_points >= 1".into()));
    }
    let rows = crop_rows(grid, max_points, seed);
    grid.subset(&rows)
}

/// Rows chosen by [`crop`], ascending.
pub fn crop_rows(grid: &VoxelGrid, max_points: usize, seed: u64) -> Vec<usize> {
    use rand::Rng as _;
    let mut rng = rng_for(seed, "crop", 0);
    let start = rng.random_range(0..grid.len());
    let c0 = grid.center(start);
    let mut by_dist: Vec<(f64, usize)> = (0..grid.len())
        .map(|r| {
            let c = grid.center(r);
            ((0..3).map(|a| (c[a] - c0[a]).powi(2)).sum(), r)
        })
        .collect();
    by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut taken = Vec::new();
    let mut points = 0;
    for (_, r) in by_dist {
        taken.push(r);
        points += grid.point_count(r);
        if points >= max_points {
            break;
        }
    }
    taken.sort_unstable();
    taken
}

/// Mutual-plurality voxel matching between two hierarchies over the same source points.
///
/// At every level, `a` (view 1) and `b` (view 2) pair when `b` holds the most of `a`'s points
/// and `a` holds the most of `b`'s (lowest row wins ties). Returned pairs ascend by `a`.
pub fn correspondence(h1: &GridHierarchy, h2: &GridHierarchy) -> Vec<Vec<(usize, usize)>> {
    let levels = h1.num_levels().min(h2.num_levels());
    (0..levels)
        .map(|l| {
            let (g1, g2) = (&h1.levels[l], &h2.levels[l]);
            let best12 = plurality(g1, g2);
            let best21 = plurality(g2, g1);
            best12
                .iter()
                .enumerate()
                .filter_map(|(a, b)| b.filter(|&b| best21[b] == Some(a)).map(|b| (a, b)))
                .collect()
        })
        .collect()
}

fn plurality(from: &VoxelGrid, to: &VoxelGrid) -> Vec<Option<usize>> {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    from.source_points
        .iter()
        .map(|pts| {
            counts.clear();
            for &p in pts {
                if let Some(Some(r)) = to.point_map.get(p as usize) {
                    *counts.entry(*r).or_default() += 1;
                }
            }
            counts
                .iter()
                .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0)))
                .map(|(&r, _)| r)
        })
        .collect()
}

/// Everything that defines one pair of training views.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViewConfig {
    pub aug: AugConfig,
    /// Source-point budget of each student crop; `usize::MAX` disables cropping.
    pub crop_max_points: usize,
    pub mask_ratio: f64,
    pub voxel_size: f64,
    pub num_levels: usize,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self {
            aug: AugConfig::default(),
            crop_max_points: 1600,
            mask_ratio: 0.4,
            voxel_size: 0.2,
            num_levels: 4,
        }
    }
}

/// Cropped and masked input of the student for one view.
#[derive(Clone, Debug)]
pub struct StudentView {
    pub hier: GridHierarchy,
    pub mask: MaskSpec,
    /// Per level, the row of the full view holding each crop row.
    pub to_full: Vec<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct ViewPair {
    pub students: [StudentView; 2],
    pub teachers: [GridHierarchy; 2],
    /// Per level, `(row in full view 1, row in full view 2)`.
    pub correspondence: Vec<Vec<(usize, usize)>>,
    pub cloud_id: String,
}

impl ViewPair {
    /// Partner row in the *other* full view, per level, for each full-view row of `view`.
    pub fn partner_maps(&self, view: usize) -> Vec<Vec<Option<usize>>> {
        self.correspondence
            .iter()
            .enumerate()
            .map(|(l, pairs)| {
                let mut m = vec![None; self.teachers[view].levels[l].len()];
                for &(a, b) in pairs {
                    if view == 0 {
                        m[a] = Some(b);
                    } else {
                        m[b] = Some(a);
                    }
                }
                m
            })
            .collect()
    }
}

fn map_to_full(crop: &GridHierarchy, full: &GridHierarchy) -> Vec<Vec<usize>> {
    crop.levels
        .iter()
        .zip(&full.levels)
        .map(|(c, f)| {
            c.keys
                .iter()
                .map(|k| f.row_of(&k.ijk).expect("crop keys are a subset of the full view"))
                .collect()
        })
        .collect()
}

/// Augments the cloud twice, voxelizes full teacher views, crops and masks student views and
/// matches the two full views level by level.
pub fn build_view_pair(cloud: &PointCloud, config: &ViewConfig, seed: u64) -> Result<ViewPair> {
    config.aug.validate()?;
    let mut teachers = Vec::with_capacity(2);
    let mut students = Vec::with_capacity(2);
    for v in 0..2u64 {
        let mut rng = rng_for(seed, "aug-params", v);
        let params = config.aug.sample(&mut rng);
        let view = augment(cloud, &params, derive_seed(seed, "augment", v));
        let grid = voxelize(
            &view.positions,
            &view.input_attributes()?,
            &view.labels,
            config.voxel_size,
        )?;
        let full = build_hierarchy(&grid, config.num_levels)?;
        let cropped = crop(&grid, config.crop_max_points, derive_seed(seed, "crop", v))?;
        let hier = build_hierarchy(&cropped, config.num_levels)?;
        let top = hier.levels.last().map(VoxelGrid::len).unwrap_or(0);
        if top < 2 {
            return Err(Error::DegenerateView(format!(
                "crop of '{}' covers {top} coarse voxel(s)",
                cloud.scene_id
            )));
        }
        let mask = make_mask(&hier, config.mask_ratio, derive_seed(seed, "mask", v))?;
        let to_full = map_to_full(&hier, &full);
        students.push(StudentView { hier, mask, to_full });
        teachers.push(full);
    }
    let correspondence = correspondence(&teachers[0], &teachers[1]);
    let [s0, s1]: [StudentView; 2] = students.try_into().expect("two views");
    let [t0, t1]: [GridHierarchy; 2] = teachers.try_into().expect("two views");
    Ok(ViewPair {
        students: [s0, s1],
        teachers: [t0, t1],
        correspondence,
        cloud_id: cloud.scene_id.clone(),
    })
}
