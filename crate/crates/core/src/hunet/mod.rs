//! Hierarchical hybrid UNet: sparse ResNet blocks, strided down/up sampling, serialized
//! window attention at coarse levels, and decoder-side mask tokens.

mod checkpoint;
mod config;
pub mod layers;
mod model;
pub mod plan;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::HUNetConfig;
pub use model::HUNet;
pub use plan::{AttnOrder, Plan};
