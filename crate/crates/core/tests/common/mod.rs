#![allow(dead_code)]

use std::io::Write as _;

use msm::rng::{rng_for, Rng};
use msm::scene::PointCloud;
use msm::voxel::{build_hierarchy, voxelize, GridHierarchy};
use msm::Tensor;
use rand::Rng as _;

/// Uniform points in `[0, extent)³` with random colors, labels in `0..7` and instance ids.
pub fn random_cloud(seed: u64, n: usize, extent: f64) -> PointCloud {
    let mut rng = rng_for(seed, "test-cloud", 0);
    let positions: Vec<[f64; 3]> = (0..n)
        .map(|_| [0; 3].map(|_| rng.random_range(0.0..extent)))
        .collect();
    let colors = (0..n).map(|_| [0; 3].map(|_| rng.random_range(0.0..1.0))).collect();
    let labels: Vec<i32> = (0..n).map(|_| rng.random_range(0..7)).collect();
    let instance_ids = (0..n).map(|_| rng.random_range(0..5)).collect();
    PointCloud {
        positions,
        colors,
        labels,
        instance_ids,
        scene_id: format!("random_{seed}"),
    }
}

pub fn hierarchy_of(cloud: &PointCloud, voxel: f64, levels: usize) -> GridHierarchy {
    let grid = voxelize(&cloud.positions, &cloud.input_attributes().unwrap(), &cloud.labels, voxel).unwrap();
    build_hierarchy(&grid, levels).unwrap()
}

pub fn random_hierarchy(seed: u64, n: usize, extent: f64, voxel: f64, levels: usize) -> GridHierarchy {
    hierarchy_of(&random_cloud(seed, n, extent), voxel, levels)
}

pub fn random_tensor(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Writes straight to the process stderr so the line shows even when test output is captured.
pub fn announce(line: &str) {
    let mut e = std::io::stderr().lock();
    let _ = writeln!(e, "{line}");
    let _ = e.flush();
}
