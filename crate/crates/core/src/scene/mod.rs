//! Scenes: synthetic generation, point-cloud files and feature dumps.

mod cloud;
mod dataset;
mod dump;
mod generate;
mod ply;

pub use cloud::PointCloud;
pub use dataset::{generate_dataset, split_indices, Split};
pub use dump::{read_feature_dump, write_feature_dump, FeatureDump, DUMP_MAGIC, DUMP_VERSION};
pub use generate::{
    generate_scene, is_thing, CountRange, SceneSpec, CLASS_NAMES, CLUTTER, COLUMN, DOOR, FLOOR,
    FURNITURE, NUM_CLASSES, TABLE, WALL,
};
pub use ply::{read_ply, write_ply};
