use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::voxel::GridHierarchy;

/// Masked / unmasked row partition at every level, derived from coarsest-level patches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSpec {
    pub num_levels: usize,
    /// Ascending masked rows per level.
    pub masked: Vec<Vec<usize>>,
    /// Ascending unmasked rows per level.
    pub unmasked: Vec<Vec<usize>>,
    /// Keys of the masked coarsest-level voxels.
    pub patches: Vec<[i32; 3]>,
    is_masked: Vec<Vec<bool>>,
}

impl MaskSpec {
    /// Nothing masked.
    pub fn empty(hier: &GridHierarchy) -> Self {
        let flags = hier.levels.iter().map(|g| vec![false; g.len()]).collect();
        Self::from_flags(flags, Vec::new())
    }

    fn from_flags(is_masked: Vec<Vec<bool>>, patches: Vec<[i32; 3]>) -> Self {
        let masked = is_masked
            .iter()
            .map(|f| f.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect())
            .collect();
        let unmasked = is_masked
            .iter()
            .map(|f| f.iter().enumerate().filter(|(_, &m)| !m).map(|(i, _)| i).collect())
            .collect();
        Self {
            num_levels: is_masked.len(),
            masked,
            unmasked,
            patches,
            is_masked,
        }
    }

    pub fn is_masked(&self, level: usize, row: usize) -> bool {
        self.is_masked[level][row]
    }

    pub fn is_empty(&self) -> bool {
        self.masked.iter().all(Vec::is_empty)
    }

    pub fn rows(&self, level: usize) -> usize {
        self.is_masked[level].len()
    }
}

/// Number of coarse patches masked at `ratio` out of `k`: `⌈ratio·k⌉`.
pub fn masked_patch_count(ratio: f64, k: usize) -> usize {
    // the epsilon absorbs representation error such as 0.7·10 = 7.000000000000001
    let m = (ratio * k as f64 - 1e-9).ceil().max(0.0) as usize;
    m.min(k)
}

/// Masks `⌈ratio·K⌉` random coarsest voxels and everything beneath them.
pub fn make_mask(hier: &GridHierarchy, ratio: f64, seed: u64) -> Result<MaskSpec> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Contract(format!("mask ratio {ratio} outside [0, 1]")));
    }
    let top = hier.num_levels() - 1;
    let k = hier.levels[top].len();
    let m = masked_patch_count(ratio, k);
    let mut rng = rng_for(seed, "mask", 0);
    let mut chosen = sample(&mut rng, k, m).into_vec();
    chosen.sort_unstable();
    let mut flags: Vec<Vec<bool>> = hier.levels.iter().map(|g| vec![false; g.len()]).collect();
    for &r in &chosen {
        flags[top][r] = true;
    }
    for l in (0..top).rev() {
        for r in 0..flags[l].len() {
            flags[l][r] = flags[l + 1][hier.parent_of[l][r]];
        }
    }
    let patches = chosen.iter().map(|&r| hier.levels[top].keys[r].ijk).collect();
    Ok(MaskSpec::from_flags(flags, patches))
}
