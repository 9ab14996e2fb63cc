use crate::error::{Error, Result};
use crate::grad::Tensor;
use crate::jobs::par_map;
use crate::scene::PointCloud;

use super::features::{FeatureExtractor, HierFeatures};
use super::nn::build_superpoints;

/// Features of every scene, extracted in parallel; output order follows `clouds`.
pub fn extract_scenes(
    extractor: &FeatureExtractor,
    clouds: &[PointCloud],
    levels: &[usize],
    jobs: usize,
) -> Result<Vec<HierFeatures>> {
    par_map(jobs, clouds, |_, c| extractor.extract(c, levels)).into_iter().collect()
}

/// Columns of the given levels, in ascending level order.
pub fn select_levels(f: &HierFeatures, levels: &[usize]) -> Result<Tensor<f64>> {
    let mut levels = levels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let parts = levels
        .iter()
        .map(|&l| {
            f.level_slice(l)
                .ok_or_else(|| Error::Contract(format!("level {l} was not extracted")))
        })
        .collect::<Result<Vec<_>>>()?;
    concat_cols(&parts)
}

fn concat_cols(parts: &[Tensor<f64>]) -> Result<Tensor<f64>> {
    let n = parts.first().map_or(0, Tensor::rows);
    let width: usize = parts.iter().map(Tensor::cols).sum();
    let mut data = Vec::with_capacity(n * width);
    for r in 0..n {
        for p in parts {
            data.extend_from_slice(p.row(r));
        }
    }
    Tensor::new(vec![n, width], data)
}

/// Row-wise concatenation of equally wide matrices.
pub fn stack_rows(parts: &[Tensor<f64>]) -> Result<Tensor<f64>> {
    let d = parts.first().map_or(0, Tensor::cols);
    if parts.iter().any(|p| p.cols() != d) {
        return Err(Error::Shape("cannot stack matrices of different widths".into()));
    }
    let n: usize = parts.iter().map(Tensor::rows).sum();
    let mut data = Vec::with_capacity(n * d);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Tensor::new(vec![n, d], data)
}

/// Points of several scenes pooled for a semantic probe. Superpoint ids are made unique
/// across scenes.
#[derive(Clone, Debug)]
pub struct SemanticSet {
    pub x: Tensor<f64>,
    pub labels: Vec<i32>,
    pub superpoints: Vec<usize>,
}

impl SemanticSet {
    /// `labels` overrides the cloud labels per scene (used for reduced annotations).
    pub fn build(
        features: &[Tensor<f64>],
        clouds: &[PointCloud],
        labels: Option<&[Vec<i32>]>,
        superpoint_cell: f64,
    ) -> Result<Self> {
        if features.len() != clouds.len() {
            return Err(Error::Shape(format!("{} feature sets for {} scenes", features.len(), clouds.len())));
        }
        let mut all_labels = Vec::new();
        let mut superpoints = Vec::new();
        let mut base = 0;
        for (i, (f, c)) in features.iter().zip(clouds).enumerate() {
            if f.rows() != c.len() {
                return Err(Error::Shape(format!("scene '{}': {} rows for {} points", c.scene_id, f.rows(), c.len())));
            }
            all_labels.extend_from_slice(labels.map_or(&c.labels, |l| &l[i]));
            let sp = build_superpoints(c, superpoint_cell)?;
            let count = sp.iter().max().map_or(0, |m| m + 1);
            superpoints.extend(sp.iter().map(|s| s + base));
            base += count;
        }
        Ok(Self {
            x: stack_rows(features)?,
            labels: all_labels,
            superpoints,
        })
    }
}
