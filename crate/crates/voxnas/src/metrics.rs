//! Reconstruction quality: voxel IoU and bidirectional Chamfer distance
//! (squared Euclidean, surface voxels only, reported x1000).

use crate::error::{Error, Result};
use crate::geometry::{support_set, VoxelGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportMetrics {
    pub iou: f64,
    pub cd_x1000: f64,
    pub size: usize,
    pub resolution: u32,
}

/// |pred ∧ gt| / |pred ∨ gt|; 1.0 when both grids are empty.
pub fn iou(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<f64> {
    if pred.resolution() != gt.resolution() {
        return Err(Error::ResolutionMismatch(pred.resolution(), gt.resolution()));
    }
    let mut inter = 0u64;
    let mut union = 0u64;
    for (a, b) in pred.words().iter().zip(gt.words()) {
        inter += (a & b).count_ones() as u64;
        union += (a | b).count_ones() as u64;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Coordinate space for Chamfer distances. `Normalized` (the default) uses
/// voxel centers in [-1,1] (pitch 2/N); `VoxelIndex` uses integer cell
/// coordinates, for debugging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordSpace {
    Normalized,
    VoxelIndex,
}

/// Bidirectional mean of squared nearest-neighbor distances between the two
/// surface-voxel sets, x1000. Symmetric in its arguments.
pub fn chamfer(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<f64> {
    chamfer_in(pred, gt, CoordSpace::Normalized)
}

pub fn chamfer_in(pred: &VoxelGrid, gt: &VoxelGrid, space: CoordSpace) -> Result<f64> {
    if pred.resolution() != gt.resolution() {
        return Err(Error::ResolutionMismatch(pred.resolution(), gt.resolution()));
    }
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptySurface);
    }
    let sp = surface_cells(pred);
    let sg = surface_cells(gt);
    if sp.is_empty() || sg.is_empty() {
        return Err(Error::EmptySurface);
    }
    let n = pred.resolution();
    let scale = match space {
        CoordSpace::Normalized => {
            let pitch = 2.0 / n as f64;
            pitch * pitch
        }
        CoordSpace::VoxelIndex => 1.0,
    };
    let d_pg = mean_min_sq(&sp, &sg, n) * scale;
    let d_gp = mean_min_sq(&sg, &sp, n) * scale;
    Ok((d_pg + d_gp) * 1000.0)
}

fn surface_cells(grid: &VoxelGrid) -> Vec<[i64; 3]> {
    support_set(grid)
        .surface
        .iter()
        .map(|&idx| {
            let (x, y, z) = grid.coords(idx);
            [x as i64, y as i64, z as i64]
        })
        .collect()
}

/// Mean over `from` of the squared integer distance to the nearest cell in
/// `to`. Surface points are voxel centers, so nearest-neighbor search runs
/// exactly in integer cell space: expand Chebyshev shells around the query
/// until the shell's minimum possible squared distance exceeds the best.
fn mean_min_sq(from: &[[i64; 3]], to: &[[i64; 3]], resolution: u32) -> f64 {
    let n = resolution as i64;
    let mut occupied = vec![false; (n * n * n) as usize];
    for c in to {
        occupied[(c[0] + n * (c[1] + n * c[2])) as usize] = true;
    }
    let mut total = 0.0;
    for q in from {
        let mut best = i64::MAX;
        let max_shell = 2 * n; // diagonal bound
        for s in 0..=max_shell {
            if best < i64::MAX && s * s > best {
                break;
            }
            let x0 = (q[0] - s).max(0);
            let x1 = (q[0] + s).min(n - 1);
            let y0 = (q[1] - s).max(0);
            let y1 = (q[1] + s).min(n - 1);
            let z0 = (q[2] - s).max(0);
            let z1 = (q[2] + s).min(n - 1);
            for z in z0..=z1 {
                for y in y0..=y1 {
                    let on_shell_zy = (z - q[2]).abs() == s || (y - q[1]).abs() == s;
                    let row = n * (y + n * z);
                    if on_shell_zy {
                        for x in x0..=x1 {
                            if occupied[(x + row) as usize] {
                                let d = sq(x - q[0]) + sq(y - q[1]) + sq(z - q[2]);
                                best = best.min(d);
                            }
                        }
                    } else {
                        // Only the two x faces of the shell remain.
                        for x in [q[0] - s, q[0] + s] {
                            if x >= 0 && x < n && occupied[(x + row) as usize] {
                                let d = sq(x - q[0]) + sq(y - q[1]) + sq(z - q[2]);
                                best = best.min(d);
                            }
                        }
                    }
                }
            }
        }
        debug_assert!(best < i64::MAX);
        total += best as f64;
    }
    total / from.len() as f64
}

#[inline]
fn sq(x: i64) -> i64 {
    x * x
}

/// O(n_r * n_g) reference used by the acceptance suite.
pub fn chamfer_brute_force(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<f64> {
    if pred.resolution() != gt.resolution() {
        return Err(Error::ResolutionMismatch(pred.resolution(), gt.resolution()));
    }
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptySurface);
    }
    let sp = surface_cells(pred);
    let sg = surface_cells(gt);
    let pitch = 2.0 / pred.resolution() as f64;
    let scale = pitch * pitch;
    let one_way = |from: &[[i64; 3]], to: &[[i64; 3]]| -> f64 {
        let mut total = 0.0;
        for a in from {
            let mut best = i64::MAX;
            for b in to {
                best = best.min(sq(a[0] - b[0]) + sq(a[1] - b[1]) + sq(a[2] - b[2]));
            }
            total += best as f64;
        }
        total / from.len() as f64
    };
    Ok((one_way(&sp, &sg) + one_way(&sg, &sp)) * scale * 1000.0)
}
