use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, Rng};
use crate::scene::PointCloud;

/// Ranges the two view augmentations are drawn from (`aug.*` config keys).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugConfig {
    /// Maximum rotation about the gravity axis; angles are drawn from `[0, rotation)`.
    pub rotation: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub flip_p: f64,
    pub jitter_sigma: f64,
    pub color_sigma: f64,
    pub elastic: bool,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            rotation: std::f64::consts::TAU,
            scale_min: 0.9,
            scale_max: 1.1,
            flip_p: 0.5,
            jitter_sigma: 0.005,
            color_sigma: 0.05,
            elastic: false,
        }
    }
}

impl AugConfig {
    /// No-op augmentation.
    pub fn identity() -> Self {
        Self {
            rotation: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            flip_p: 0.0,
            jitter_sigma: 0.0,
            color_sigma: 0.0,
            elastic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.8..=1.2).contains(&self.scale_min)
            || !(0.8..=1.2).contains(&self.scale_max)
            || self.scale_min > self.scale_max
        {
            return Err(Error::Config(format!(
                "aug.scale range [{}, {}] must lie within [0.8, 1.2]",
                self.scale_min, self.scale_max
            )));
        }
        if !(0.0..=1.0).contains(&self.flip_p) {
            return Err(Error::Config("aug.flip_p must be a probability".into()));
        }
        if !(self.jitter_sigma >= 0.0) || !(self.color_sigma >= 0.0) || !(self.rotation >= 0.0) {
            return Err(Error::Config("aug sigmas and rotation must be non-negative".into()));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut Rng) -> AugmentationParams {
        let rotation = if self.rotation > 0.0 {
            rng.random_range(0.0..self.rotation)
        } else {
            0.0
        };
        let scale = if self.scale_max > self.scale_min {
            rng.random_range(self.scale_min..self.scale_max)
        } else {
            self.scale_min
        };
        let fx = rng.random::<f64>() < self.flip_p;
        let fy = rng.random::<f64>() < self.flip_p;
        AugmentationParams {
            rotation,
            scale,
            flip: [fx, fy, false],
            jitter_sigma: self.jitter_sigma,
            color_sigma: self.color_sigma,
            elastic: self.elastic,
        }
    }
}

/// One concrete augmentation draw.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationParams {
    /// Radians about +z.
    pub rotation: f64,
    pub scale: f64,
    pub flip: [bool; 3],
    pub jitter_sigma: f64,
    pub color_sigma: f64,
    pub elastic: bool,
}

impl AugmentationParams {
    pub fn identity() -> Self {
        Self {
            rotation: 0.0,
            scale: 1.0,
            flip: [false; 3],
            jitter_sigma: 0.0,
            color_sigma: 0.0,
            elastic: false,
        }
    }
}

/// Applies rotation, flips, scaling, elastic warp, positional and color jitter, in that order.
/// Point order, labels and instance ids are untouched.
pub fn augment(cloud: &PointCloud, params: &AugmentationParams, seed: u64) -> PointCloud {
    let mut rng = rng_for(seed, "augment", 0);
    let (s, c) = params.rotation.sin_cos();
    let mut out = cloud.clone();
    for p in &mut out.positions {
        let mut q = [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]];
        for a in 0..3 {
            if params.flip[a] {
                q[a] = -q[a];
            }
            q[a] *= params.scale;
        }
        *p = q;
    }
    if params.elastic {
        elastic_warp(&mut out.positions, &mut rng);
    }
    if params.jitter_sigma > 0.0 {
        let n = Normal::new(0.0, params.jitter_sigma).expect("finite sigma");
        for p in &mut out.positions {
            for v in p.iter_mut() {
                *v += n.sample(&mut rng);
            }
        }
    }
    if params.color_sigma > 0.0 {
        let n = Normal::new(0.0, params.color_sigma).expect("finite sigma");
        for col in &mut out.colors {
            for v in col.iter_mut() {
                *v = (*v + n.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// Smooth displacement field built from a few random low-frequency sinusoids (≤ 2 cm).
fn elastic_warp(positions: &mut [[f64; 3]], rng: &mut Rng) {
    let waves: Vec<([f64; 3], [f64; 3], f64)> = (0..4)
        .map(|_| {
            let k = [0, 1, 2].map(|_| rng.random_range(-3.0..3.0));
            let dir = [0, 1, 2].map(|_| rng.random_range(-1.0..1.0));
            (k, dir, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    for p in positions.iter_mut() {
        let mut d = [0.0; 3];
        for (k, dir, phase) in &waves {
            let s = (k[0] * p[0] + k[1] * p[1] + k[2] * p[2] + phase).sin() * 0.005;
            for a in 0..3 {
                d[a] += s * dir[a];
            }
        }
        for a in 0..3 {
            p[a] += d[a];
        }
    }
}
