//! Frozen-feature evaluation: feature extraction, semantic and instance probes, metrics.

pub mod bench;
pub mod features;
pub mod instance;
pub mod limited;
pub mod linear;
pub mod metrics;
pub mod nn;
pub mod pca;
pub mod pipeline;

pub use bench::{BenchFeatures, Benchmark};
pub use features::{FeatureExtractor, HierFeatures};
pub use instance::{
    average_precision, gt_instances, instance_probe, map50, radius_clusters, set_iou, GtInstance,
    InstanceConfig, InstancePrediction, InstanceProbe, InstanceScene, OffsetHead,
};
pub use limited::{kept_scene_count, limited_annotation_split, LimitedMode};
pub use linear::{fit_linear, linear_probe, LinearHead, LinearProbe, ProbeConfig, Standardizer};
pub use metrics::{miou, ConfusionMatrix};
pub use nn::{build_superpoints, nearest, nn_probe, superpoint_means, Metric, NnOptions};
pub use pca::{fit_pca, pca_colors, Pca};
pub use pipeline::{extract_scenes, select_levels, stack_rows, SemanticSet};
