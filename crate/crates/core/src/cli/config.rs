use std::path::Path;

use serde::{Deserialize, Serialize};

use msm::eval::{InstanceConfig, Metric, NnOptions, ProbeConfig};
use msm::hunet::HUNetConfig;
use msm::train::{PretrainConfig, TrainConfig};
use msm::views::{AugConfig, ViewConfig};
use msm::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CropSection {
    /// Source-point budget of each student crop.
    pub max_points: usize,
    pub voxel_size: f64,
}

impl Default for CropSection {
    fn default() -> Self {
        let v = ViewConfig::default();
        Self { max_points: v.crop_max_points, voxel_size: v.voxel_size }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskSection {
    pub ratio: f64,
}

impl Default for MaskSection {
    fn default() -> Self {
        Self { ratio: ViewConfig::default().mask_ratio }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub standardize: bool,
    pub metric: Metric,
    /// Unit-normalize superpoint features before the nearest-neighbor search.
    pub normalize: bool,
    pub superpoint_cell: f64,
    pub cluster_radius: f64,
    pub min_cluster_points: usize,
    pub offset_hidden: usize,
    /// Checkpoint parameters to evaluate: `student` or `teacher`.
    pub section: String,
}

impl Default for ProbeSection {
    fn default() -> Self {
        let p = ProbeConfig::default();
        let i = InstanceConfig::default();
        Self {
            epochs: p.epochs,
            lr: p.lr,
            weight_decay: p.weight_decay,
            batch_size: p.batch_size,
            standardize: p.standardize,
            metric: Metric::L2,
            normalize: false,
            superpoint_cell: 0.25,
            cluster_radius: i.radius,
            min_cluster_points: i.min_points,
            offset_hidden: i.hidden,
            section: "student".into(),
        }
    }
}

/// The whole run configuration; every section rejects unknown keys.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub aug: AugConfig,
    pub crop: CropSection,
    pub mask: MaskSection,
    pub model: HUNetConfig,
    pub train: TrainConfig,
    pub probe: ProbeSection,
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    /// Reads an optional TOML file, then applies `section.key = value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut table: toml::Table =
            toml::from_str(&text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        for (key, raw) in overrides {
            let parts: Vec<&str> = key.split('.').collect();
            if parts.len() < 2 || parts.iter().any(|p| p.is_empty()) {
                return Err(Error::Config(format!("override '--{key}' is not SECTION.KEY")));
            }
            let mut t = &mut table;
            for p in &parts[..parts.len() - 1] {
                let entry = t
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                t = entry
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("'{p}' in '--{key}' is not a section")))?;
            }
            t.insert(parts[parts.len() - 1].to_string(), parse_value(raw));
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate(self.model.num_levels())?;
        self.aug.validate()?;
        self.probe_config().validate()?;
        if !(self.crop.voxel_size > 0.0) || self.crop.max_points == 0 {
            return Err(Error::Config("crop.voxel_size and crop.max_points must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.mask.ratio) {
            return Err(Error::Config(format!("mask.ratio {} outside [0, 1)", self.mask.ratio)));
        }
        if self.probe.section != "student" && self.probe.section != "teacher" {
            return Err(Error::Config(format!("probe.section '{}' is not student or teacher", self.probe.section)));
        }
        if !(self.probe.superpoint_cell > 0.0) || !(self.probe.cluster_radius > 0.0) {
            return Err(Error::Config("probe.superpoint_cell and probe.cluster_radius must be positive".into()));
        }
        Ok(())
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            model: self.model.clone(),
            views: ViewConfig {
                aug: self.aug.clone(),
                crop_max_points: self.crop.max_points,
                mask_ratio: self.mask.ratio,
                voxel_size: self.crop.voxel_size,
                num_levels: self.model.num_levels(),
            },
            train: self.train.clone(),
        }
    }

    pub fn probe_config(&self) -> ProbeConfig {
        let p = &self.probe;
        ProbeConfig {
            epochs: p.epochs,
            lr: p.lr,
            weight_decay: p.weight_decay,
            batch_size: p.batch_size,
            seed: self.train.seed,
            standardize: p.standardize,
        }
    }

    pub fn nn_options(&self, jobs: usize) -> NnOptions {
        NnOptions { metric: self.probe.metric, normalize: self.probe.normalize, jobs }
    }

    pub fn instance_config(&self) -> InstanceConfig {
        InstanceConfig {
            probe: self.probe_config(),
            hidden: self.probe.offset_hidden,
            radius: self.probe.cluster_radius,
            min_points: self.probe.min_cluster_points,
        }
    }
}
