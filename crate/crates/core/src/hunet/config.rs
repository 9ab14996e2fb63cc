use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxel::Curve;

/// Shape of the hierarchical hybrid UNet (`model.*` config keys).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HUNetConfig {
    pub in_channels: usize,
    /// Encoder width per level, finest first.
    pub enc_channels: Vec<usize>,
    /// Decoder width per level, finest first.
    pub dec_channels: Vec<usize>,
    pub res_blocks: Vec<usize>,
    pub attn_blocks: Vec<usize>,
    pub window: usize,
    pub heads: usize,
    pub ff_ratio: usize,
    /// Serialization curves cycled across successive attention blocks.
    pub curves: Vec<Curve>,
    pub norm_eps: f64,
}

impl Default for HUNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            enc_channels: vec![16, 32, 64, 96],
            dec_channels: vec![24, 32, 64, 96],
            res_blocks: vec![2, 2, 2, 2],
            attn_blocks: vec![0, 0, 2, 2],
            window: 64,
            heads: 4,
            ff_ratio: 4,
            curves: Curve::CYCLE.to_vec(),
            norm_eps: 1e-6,
        }
    }
}

impl HUNetConfig {
    /// Small configuration for gradient checks and unit tests.
    pub fn tiny() -> Self {
        Self {
            in_channels: 2,
            enc_channels: vec![3, 4],
            dec_channels: vec![3, 4],
            res_blocks: vec![1, 1],
            attn_blocks: vec![0, 1],
            window: 4,
            heads: 2,
            ff_ratio: 2,
            curves: Curve::CYCLE.to_vec(),
            norm_eps: 1e-6,
        }
    }

    pub fn num_levels(&self) -> usize {
        self.enc_channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.num_levels();
        if l < 2 {
            return Err(Error::Config("model needs at least 2 levels".into()));
        }
        for (name, len) in [
            ("dec_channels", self.dec_channels.len()),
            ("res_blocks", self.res_blocks.len()),
            ("attn_blocks", self.attn_blocks.len()),
        ] {
            if len != l {
                return Err(Error::Config(format!(
                    "model.{name} has {len} entries, expected {l}"
                )));
            }
        }
        if self.in_channels == 0 || self.enc_channels.iter().chain(&self.dec_channels).any(|&c| c == 0) {
            return Err(Error::Config("model channel widths must be positive".into()));
        }
        if self.enc_channels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "model.enc_channels must strictly increase with depth".into(),
            ));
        }
        if self.window == 0 || self.ff_ratio == 0 {
            return Err(Error::Config("model.window and model.ff_ratio must be >= 1".into()));
        }
        if self.curves.is_empty() {
            return Err(Error::Config("model.curves must not be empty".into()));
        }
        for lv in 0..l {
            if self.attn_blocks[lv] == 0 {
                continue;
            }
            for (side, c) in [("enc", self.enc_channels[lv]), ("dec", self.dec_channels[lv])] {
                if self.heads == 0 || c % self.heads != 0 {
                    return Err(Error::Config(format!(
                        "{side} width {c} at level {lv} is not divisible by {} heads",
                        self.heads
                    )));
                }
            }
        }
        if !(self.norm_eps > 0.0) {
            return Err(Error::Config("model.norm_eps must be positive".into()));
        }
        Ok(())
    }

    /// Width of concatenated features over the selected decoder levels.
    pub fn feature_width(&self, levels: &[usize]) -> usize {
        levels.iter().map(|&l| self.dec_channels[l]).sum()
    }
}
