use std::path::Path;

use crate::error::{Error, Result};
use crate::grad::{ParamSet, Tensor};
use crate::hunet::{load_checkpoint, HUNet, HUNetConfig};
use crate::scene::PointCloud;
use crate::voxel::{build_hierarchy, trilinear_sample, voxelize};

/// Per-point features concatenated over selected decoder levels, finest first.
#[derive(Clone, Debug, PartialEq)]
pub struct HierFeatures {
    /// `[points, Σ widths]`.
    pub data: Tensor<f64>,
    /// Selected levels, ascending.
    pub levels: Vec<usize>,
    /// Column where each selected level starts.
    pub offsets: Vec<usize>,
    pub widths: Vec<usize>,
}

impl HierFeatures {
    pub fn width(&self) -> usize {
        self.data.cols()
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Columns of one selected level.
    pub fn level_slice(&self, level: usize) -> Option<Tensor<f64>> {
        let i = self.levels.iter().position(|&l| l == level)?;
        let (a, w) = (self.offsets[i], self.widths[i]);
        let n = self.len();
        let mut data = Vec::with_capacity(n * w);
        for r in 0..n {
            data.extend_from_slice(&self.data.row(r)[a..a + w]);
        }
        Tensor::new(vec![n, w], data).ok()
    }
}

/// Frozen network plus the voxelization it was trained with.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    pub model: HUNet,
    pub params: ParamSet<f64>,
    pub voxel_size: f64,
}

impl FeatureExtractor {
    pub fn new(model: HUNet, params: ParamSet<f64>, voxel_size: f64) -> Self {
        Self { model, params, voxel_size }
    }

    /// Loads one parameter section (`student` or `teacher`) of a checkpoint.
    pub fn from_checkpoint(path: &Path, section: &str, expected: Option<&HUNetConfig>) -> Result<Self> {
        let mut ck = load_checkpoint(path, expected)?;
        let params = ck
            .sections
            .remove(section)
            .ok_or_else(|| Error::Checkpoint(format!("checkpoint has no '{section}' section")))?;
        let voxel_size = ck.meta["views"]["voxel_size"]
            .as_f64()
            .ok_or_else(|| Error::Checkpoint("checkpoint does not record a voxel size".into()))?;
        let model = HUNet::new(ck.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self { model, params, voxel_size })
    }

    /// Decoder features of the unaugmented scene, sampled trilinearly at every point.
    pub fn extract(&self, cloud: &PointCloud, levels: &[usize]) -> Result<HierFeatures> {
        let n = self.model.num_levels();
        let mut levels = levels.to_vec();
        levels.sort_unstable();
        levels.dedup();
        if levels.is_empty() || levels.iter().any(|&l| l >= n) {
            return Err(Error::Contract(format!("levels {levels:?} invalid for a {n}-level model")));
        }
        let grid = voxelize(&cloud.positions, &cloud.input_attributes()?, &cloud.labels, self.voxel_size)?;
        let hier = build_hierarchy(&grid, n)?;
        let out = self.model.infer(&self.params, &hier)?;
        let mut parts = Vec::with_capacity(levels.len());
        for &l in &levels {
            parts.push(trilinear_sample(&hier.levels[l], &out[l], &cloud.positions)?);
        }
        let widths: Vec<usize> = parts.iter().map(Tensor::cols).collect();
        let offsets = widths
            .iter()
            .scan(0, |acc, &w| {
                let o = *acc;
                *acc += w;
                Some(o)
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(cloud.len() * total);
        for r in 0..cloud.len() {
            for p in &parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(HierFeatures {
            data: Tensor::new(vec![cloud.len(), total], data)?,
            levels,
            offsets,
            widths,
        })
    }
}
