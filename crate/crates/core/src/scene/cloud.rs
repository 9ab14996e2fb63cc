use crate::error::{Error, Result};
use crate::grad::Tensor;

/// Labeled point cloud of one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<[f64; 3]>,
    /// RGB in `[0, 1]`.
    pub colors: Vec<[f64; 3]>,
    /// Semantic class per point, −1 = ignore.
    pub labels: Vec<i32>,
    /// Instance per point, −1 = none.
    pub instance_ids: Vec<i32>,
    pub scene_id: String,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let n = self.positions.len();
        if n == 0 {
            return Err(Error::EmptyScene(format!("scene '{}' has no points", self.scene_id)));
        }
        if self.colors.len() != n || self.labels.len() != n || self.instance_ids.len() != n {
            return Err(Error::Format(format!(
                "scene '{}' has mismatched field lengths",
                self.scene_id
            )));
        }
        if let Some(l) = self
            .labels
            .iter()
            .find(|&&l| l < -1 || l >= num_classes as i32)
        {
            return Err(Error::Format(format!("label {l} outside [-1, {num_classes})")));
        }
        Ok(())
    }

    /// Model input attributes: colors shifted to be zero-centered, `[N, 3]`.
    pub fn input_attributes(&self) -> Result<Tensor<f64>> {
        let data = self
            .colors
            .iter()
            .flat_map(|c| c.map(|v| v - 0.5))
            .collect();
        Tensor::new(vec![self.len(), 3], data)
            .map_err(|_| Error::EmptyScene(format!("scene '{}' has no points", self.scene_id)))
    }
}
