//! Student and teacher inputs: augmentation, cropping, hierarchy-consistent masking and
//! cross-view voxel matching.

mod augment;
mod mask;
mod pair;

pub use augment::{augment, AugConfig, AugmentationParams};
pub use mask::{make_mask, masked_patch_count, MaskSpec};
pub use pair::{
    build_view_pair, correspondence, crop, crop_rows, StudentView, ViewConfig, ViewPair,
};
