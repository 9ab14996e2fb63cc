use crate::error::Result;
use crate::scene::PointCloud;

use super::features::{FeatureExtractor, HierFeatures};
use super::linear::{linear_probe, LinearProbe, ProbeConfig};
use super::metrics::miou;
use super::nn::{nn_probe, NnOptions};
use super::pipeline::{extract_scenes, select_levels, SemanticSet};

/// Train/val scenes with the probe settings used to score a feature extractor.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub train: Vec<PointCloud>,
    pub val: Vec<PointCloud>,
    pub num_classes: usize,
    pub probe: ProbeConfig,
    pub superpoint_cell: f64,
    pub jobs: usize,
}

/// Features of every benchmark scene at every decoder level.
#[derive(Clone, Debug)]
pub struct BenchFeatures {
    pub train: Vec<HierFeatures>,
    pub val: Vec<HierFeatures>,
}

impl Benchmark {
    pub fn extract(&self, extractor: &FeatureExtractor) -> Result<BenchFeatures> {
        let levels: Vec<usize> = (0..extractor.model.num_levels()).collect();
        Ok(BenchFeatures {
            train: extract_scenes(extractor, &self.train, &levels, self.jobs)?,
            val: extract_scenes(extractor, &self.val, &levels, self.jobs)?,
        })
    }

    /// Pooled train and val sets restricted to `levels`.
    pub fn sets(&self, f: &BenchFeatures, levels: &[usize]) -> Result<(SemanticSet, SemanticSet)> {
        let pick = |fs: &[HierFeatures]| fs.iter().map(|f| select_levels(f, levels)).collect::<Result<Vec<_>>>();
        Ok((
            SemanticSet::build(&pick(&f.train)?, &self.train, None, self.superpoint_cell)?,
            SemanticSet::build(&pick(&f.val)?, &self.val, None, self.superpoint_cell)?,
        ))
    }

    pub fn linear(&self, f: &BenchFeatures, levels: &[usize]) -> Result<LinearProbe> {
        let (a, b) = self.sets(f, levels)?;
        linear_probe(&a.x, &a.labels, &b.x, &b.labels, self.num_classes, &self.probe)
    }

    /// Validation mIoU of the superpoint 1-NN probe.
    pub fn nn(&self, f: &BenchFeatures, levels: &[usize], opts: &NnOptions) -> Result<f64> {
        let (a, b) = self.sets(f, levels)?;
        let pred = nn_probe(&a.x, &a.labels, &a.superpoints, &b.x, &b.superpoints, opts)?;
        Ok(miou(&pred, &b.labels, self.num_classes)?.1)
    }
}
