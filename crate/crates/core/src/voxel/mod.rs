//! Sparse voxel grids and the level pyramid built on them.

mod grid;
mod hierarchy;
mod neighbors;
mod sample;
mod serialize;

pub use grid::{voxelize, VoxelGrid, VoxelKey};
pub use hierarchy::{build_hierarchy, GridHierarchy};
pub use neighbors::{kernel_neighbors, offset_id, offset_of, CENTER, STENCIL};
pub use sample::trilinear_sample;
pub use serialize::{
    hilbert3, morton3, offset_coords, serialize, serialize_keys, Curve, SerializationOrder,
    CODE_BITS,
};
