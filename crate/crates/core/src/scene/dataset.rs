use rand::seq::SliceRandom;

use crate::error::Result;
use crate::jobs::par_map;
use crate::rng::{derive_seed, rng_for};

use super::{generate_scene, PointCloud, SceneSpec};

/// Scene indices of the train and validation splits, each ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Seeded 80/20 split of `n` scenes (validation gets `n / 5`).
pub fn split_indices(n: usize, seed: u64) -> Split {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, "split", 0));
    let (val, train) = order.split_at(n / 5);
    let (mut train, mut val) = (train.to_vec(), val.to_vec());
    train.sort_unstable();
    val.sort_unstable();
    Split { train, val }
}

/// `n` synthetic rooms named `scene_0000`, `scene_0001`, ...; scene `i` depends only on
/// `(seed, i)`.
pub fn generate_dataset(n: usize, seed: u64, jobs: usize) -> Result<Vec<PointCloud>> {
    let idx: Vec<usize> = (0..n).collect();
    par_map(jobs, &idx, |_, &i| {
        let mut cloud = generate_scene(&SceneSpec::with_seed(derive_seed(seed, "scene", i as u64)))?;
        cloud.scene_id = format!("scene_{i:04}");
        Ok(cloud)
    })
    .into_iter()
    .collect()
}
