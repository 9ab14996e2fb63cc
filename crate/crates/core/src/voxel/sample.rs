use crate::error::{shape_err, Result};
use crate::grad::{Scalar, Tensor};

use super::VoxelGrid;

/// Trilinear interpolation of per-voxel features at arbitrary positions.
///
/// Each query blends the eight voxel centers of its enclosing cell. Unoccupied corners are
/// dropped and the remaining weights renormalized; when no occupied corner carries weight, the
/// nearest occupied voxel center (lowest row on ties) supplies the feature.
pub fn trilinear_sample<T: Scalar>(
    grid: &VoxelGrid,
    features: &Tensor<T>,
    queries: &[[f64; 3]],
) -> Result<Tensor<T>> {
    if features.rows() != grid.len() {
        return shape_err(format!(
            "{} feature rows for {} voxels",
            features.rows(),
            grid.len()
        ));
    }
    if queries.is_empty() {
        return shape_err("no query positions");
    }
    let c = features.cols();
    let mut out = Tensor::zeros(&[queries.len(), c]);
    let mut corners: Vec<(usize, f64)> = Vec::with_capacity(8);
    for (qi, q) in queries.iter().enumerate() {
        corners.clear();
        let mut base = [0i32; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let u = q[a] / grid.voxel_size - 0.5;
            let b = u.floor();
            base[a] = b as i32;
            frac[a] = u - b;
        }
        let mut wsum = 0.0;
        for corner in 0..8 {
            let bit = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let mut w = 1.0;
            let mut key = base;
            for a in 0..3 {
                if bit[a] == 1 {
                    w *= frac[a];
                    key[a] += 1;
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            if let Some(r) = grid.row_of(&key) {
                corners.push((r, w));
                wsum += w;
            }
        }
        let dst = out.row_mut(qi);
        if wsum > 0.0 {
            for &(r, w) in &corners {
                let w = T::lit(w / wsum);
                dst.iter_mut()
                    .zip(features.row(r))
                    .for_each(|(d, &f)| *d = *d + w * f);
            }
        } else {
            let r = nearest_voxel(grid, q);
            dst.copy_from_slice(features.row(r));
        }
    }
    Ok(out)
}

fn nearest_voxel(grid: &VoxelGrid, q: &[f64; 3]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for r in 0..grid.len() {
        let c = grid.center(r);
        let d: f64 = (0..3).map(|a| (c[a] - q[a]).powi(2)).sum();
        if d < best.0 {
            best = (d, r);
        }
    }
    best.1
}
