//! Masked scene modeling on sparse voxel hierarchies.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod grad;
pub mod hunet;
pub mod jobs;
pub mod rng;
pub mod scene;
pub mod train;
pub mod views;
pub mod voxel;

pub use error::{Error, Result};

/// Double-precision aliases used by the training and evaluation pipeline.
pub type Tensor = grad::Tensor<f64>;
pub type Graph = grad::Graph<f64>;
pub type ParamSet = grad::ParamSet<f64>;
