use super::VoxelGrid;

/// Number of taps in the 3×3×3 stencil.
pub const STENCIL: usize = 27;
/// Offset id of `(0,0,0)`.
pub const CENTER: u8 = 13;

/// Offset id of `(dx,dy,dz)` with components in `-1..=1`.
pub fn offset_id(d: [i32; 3]) -> u8 {
    ((d[0] + 1) * 9 + (d[1] + 1) * 3 + (d[2] + 1)) as u8
}

pub fn offset_of(id: u8) -> [i32; 3] {
    let id = i32::from(id);
    [id / 9 - 1, (id / 3) % 3 - 1, id % 3 - 1]
}

/// For every voxel, the occupied voxels of its 3×3×3 neighborhood as `(offset id, row)`,
/// ascending by offset id. The voxel itself is always listed at [`CENTER`].
pub fn kernel_neighbors(grid: &VoxelGrid) -> Vec<Vec<(u8, usize)>> {
    grid.keys
        .iter()
        .map(|k| {
            let mut out = Vec::new();
            for id in 0..STENCIL as u8 {
                let d = offset_of(id);
                let q = [k.ijk[0] + d[0], k.ijk[1] + d[1], k.ijk[2] + d[2]];
                if let Some(r) = grid.row_of(&q) {
                    out.push((id, r));
                }
            }
            out
        })
        .collect()
}
