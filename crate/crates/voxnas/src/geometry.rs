//! Triangle meshes, binary voxel grids, and the surface/outer support sets.
//!
//! The normalized domain is `[-1,1]^3`. A grid of resolution `N` places the
//! center of voxel `(i,j,k)` at `(-1 + (i+0.5)*2/N, ...)` per axis, and packs
//! occupancy x-fastest, then y, then z.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

/// Raw triangle mesh in model units.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.len() < 3 || triangles.is_empty() {
            return Err(Error::Format("mesh needs ≥3 vertices and ≥1 triangle".into()));
        }
        for t in &triangles {
            if t.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::Format(format!(
                    "triangle index out of range: {:?} with {} vertices",
                    t,
                    vertices.len()
                )));
            }
        }
        Ok(Mesh { vertices, triangles })
    }

    /// Axis-aligned bounding box as (min, max) corners.
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        (lo, hi)
    }
}

/// Translate to the bounding-box center and scale uniformly so the farthest
/// vertex sits at `radius` from the origin.
pub fn normalize_mesh(mesh: &Mesh, radius: f64) -> Result<Mesh> {
    assert!(radius > 0.0 && radius <= 1.0, "radius must be in (0,1]");
    let (lo, hi) = mesh.bounding_box();
    let center = [
        0.5 * (lo[0] + hi[0]),
        0.5 * (lo[1] + hi[1]),
        0.5 * (lo[2] + hi[2]),
    ];
    let mut max_norm: f64 = 0.0;
    for v in &mesh.vertices {
        let d = [v[0] - center[0], v[1] - center[1], v[2] - center[2]];
        max_norm = max_norm.max((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt());
    }
    if max_norm == 0.0 {
        return Err(Error::ZeroExtent);
    }
    let s = radius / max_norm;
    let vertices = mesh
        .vertices
        .iter()
        .map(|v| {
            [
                (v[0] - center[0]) * s,
                (v[1] - center[1]) * s,
                (v[2] - center[2]) * s,
            ]
        })
        .collect();
    Ok(Mesh {
        vertices,
        triangles: mesh.triangles.clone(),
    })
}

/// `N^3` occupancy bitset over `[-1,1]^3`, x-fastest order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelGrid {
    resolution: u32,
    words: Vec<u64>,
}

impl VoxelGrid {
    pub fn empty(resolution: u32) -> Self {
        let n = resolution as usize;
        let bits = n * n * n;
        VoxelGrid {
            resolution,
            words: vec![0u64; bits.div_ceil(64)],
        }
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        let n = self.resolution as usize;
        n * n * n
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32, z: u32) -> usize {
        let n = self.resolution as usize;
        x as usize + n * (y as usize + n * z as usize)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (u32, u32, u32) {
        let n = self.resolution as usize;
        ((idx % n) as u32, ((idx / n) % n) as u32, (idx / (n * n)) as u32)
    }

    #[inline]
    pub fn get(&self, idx: usize) -> bool {
        (self.words[idx / 64] >> (idx % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, idx: usize, value: bool) {
        if value {
            self.words[idx / 64] |= 1 << (idx % 64);
        } else {
            self.words[idx / 64] &= !(1 << (idx % 64));
        }
    }

    pub fn count_occupied(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Normalized-space center of voxel `idx`.
    #[inline]
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let (x, y, z) = self.coords(idx);
        let pitch = 2.0 / self.resolution as f64;
        [
            -1.0 + (x as f64 + 0.5) * pitch,
            -1.0 + (y as f64 + 0.5) * pitch,
            -1.0 + (z as f64 + 0.5) * pitch,
        ]
    }

    pub fn pitch(&self) -> f64 {
        2.0 / self.resolution as f64
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    /// Write the bit-exact VOXB format: magic "VOXB", LE u32 N, then
    /// ceil(N^3/8) bytes packing occupancy LSB-first in x-fastest order.
    pub fn write_voxb<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"VOXB")?;
        w.write_all(&self.resolution.to_le_bytes())?;
        let nbytes = self.len().div_ceil(8);
        let mut bytes = vec![0u8; nbytes];
        for (i, b) in bytes.iter_mut().enumerate() {
            for bit in 0..8 {
                let idx = i * 8 + bit;
                if idx < self.len() && self.get(idx) {
                    *b |= 1 << bit;
                }
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_voxb<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"VOXB" {
            return Err(Error::Format("bad magic, expected VOXB".into()));
        }
        let mut nb = [0u8; 4];
        r.read_exact(&mut nb)?;
        let resolution = u32::from_le_bytes(nb);
        if resolution < 8 {
            return Err(Error::ResolutionTooSmall(resolution));
        }
        let mut grid = VoxelGrid::empty(resolution);
        let nbytes = grid.len().div_ceil(8);
        let mut bytes = vec![0u8; nbytes];
        r.read_exact(&mut bytes)?;
        for (i, &b) in bytes.iter().enumerate() {
            for bit in 0..8 {
                let idx = i * 8 + bit;
                if idx < grid.len() {
                    grid.set(idx, (b >> bit) & 1 == 1);
                }
            }
        }
        Ok(grid)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_voxb(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_voxb(&mut f)
    }
}

/// Surface voxels and their unoccupied 6-neighbors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSet {
    pub surface: Vec<usize>,
    pub outer: Vec<usize>,
}

impl SupportSet {
    pub fn len(&self) -> usize {
        self.surface.len() + self.outer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surface.is_empty() && self.outer.is_empty()
    }
}

const NEIGHBOR_OFFSETS: [(i64, i64, i64); 6] = [
    (-1, 0, 0),
    (1, 0, 0),
    (0, -1, 0),
    (0, 1, 0),
    (0, 0, -1),
    (0, 0, 1),
];

/// Occupied voxels with at least one unoccupied 6-neighbor, plus the
/// unoccupied neighbors themselves. Out-of-bounds counts as unoccupied.
pub fn support_set(grid: &VoxelGrid) -> SupportSet {
    assert!(grid.count_occupied() >= 1, "grid must have ≥1 occupied voxel");
    let n = grid.resolution() as i64;
    let mut surface = Vec::new();
    let mut outer_mask = vec![false; grid.len()];
    for idx in 0..grid.len() {
        if !grid.get(idx) {
            continue;
        }
        let (x, y, z) = grid.coords(idx);
        let mut is_surface = false;
        for (dx, dy, dz) in NEIGHBOR_OFFSETS {
            let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
            if nx < 0 || ny < 0 || nz < 0 || nx >= n || ny >= n || nz >= n {
                is_surface = true;
                continue;
            }
            let nidx = grid.index(nx as u32, ny as u32, nz as u32);
            if !grid.get(nidx) {
                is_surface = true;
                outer_mask[nidx] = true;
            }
        }
        if is_surface {
            surface.push(idx);
        }
    }
    let outer: Vec<usize> = (0..grid.len()).filter(|&i| outer_mask[i]).collect();
    if outer.is_empty() {
        log::warn!("fully occupied grid: outer support layer is empty");
    }
    SupportSet { surface, outer }
}

/// One axis-aligned parity rasterization pass.
///
/// Rays travel along `axis`; a column is fixed by the two perpendicular
/// coordinates. Boundary hits use a half-open edge rule so a crossing on a
/// shared edge is counted for exactly one of the adjoining triangles.
fn rasterize_axis(mesh: &Mesh, resolution: u32, axis: usize) -> Vec<u64> {
    let n = resolution as usize;
    let pitch = 2.0 / n as f64;
    let (ua, va) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };

    // Bucket triangles by the (u,v) column cells their projection can touch.
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); n * n];
    let cell_of = |c: f64| -> i64 { ((c + 1.0) / pitch - 0.5).round() as i64 };
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = [mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]];
        let (mut ulo, mut uhi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut vlo, mut vhi) = (f64::INFINITY, f64::NEG_INFINITY);
        for q in &p {
            ulo = ulo.min(q[ua]);
            uhi = uhi.max(q[ua]);
            vlo = vlo.min(q[va]);
            vhi = vhi.max(q[va]);
        }
        let iu0 = cell_of(ulo).max(0);
        let iu1 = cell_of(uhi).min(n as i64 - 1);
        let iv0 = cell_of(vlo).max(0);
        let iv1 = cell_of(vhi).min(n as i64 - 1);
        for iv in iv0..=iv1 {
            for iu in iu0..=iu1 {
                buckets[iv as usize * n + iu as usize].push(t as u32);
            }
        }
    }

    let bits = n * n * n;
    let mut words = vec![0u64; bits.div_ceil(64)];
    let mut crossings: Vec<f64> = Vec::new();
    for iv in 0..n {
        let pv = -1.0 + (iv as f64 + 0.5) * pitch;
        for iu in 0..n {
            let pu = -1.0 + (iu as f64 + 0.5) * pitch;
            crossings.clear();
            for &t in &buckets[iv * n + iu] {
                let tri = mesh.triangles[t as usize];
                let a = mesh.vertices[tri[0]];
                let b = mesh.vertices[tri[1]];
                let c = mesh.vertices[tri[2]];
                if let Some(w) = column_crossing(
                    [a[ua], a[va], a[axis]],
                    [b[ua], b[va], b[axis]],
                    [c[ua], c[va], c[axis]],
                    pu,
                    pv,
                ) {
                    crossings.push(w);
                }
            }
            crossings.sort_by(|x, y| x.partial_cmp(y).unwrap());
            // Walk the column toggling inside/outside at each crossing.
            let mut inside = false;
            let mut ci = 0;
            for iw in 0..n {
                let pw = -1.0 + (iw as f64 + 0.5) * pitch;
                while ci < crossings.len() && crossings[ci] <= pw {
                    inside = !inside;
                    ci += 1;
                }
                if inside {
                    let (x, y, z) = match axis {
                        0 => (iw, iu, iv),
                        1 => (iu, iw, iv),
                        _ => (iu, iv, iw),
                    };
                    let idx = x + n * (y + n * z);
                    words[idx / 64] |= 1 << (idx % 64);
                }
            }
        }
    }
    words
}

/// Crossing coordinate along the ray axis, if the column point `(pu,pv)`
/// falls inside the projected triangle. Vertices are given as `[u, v, w]`
/// with `w` the ray-axis coordinate.
fn column_crossing(a: [f64; 3], b: [f64; 3], c: [f64; 3], pu: f64, pv: f64) -> Option<f64> {
    // Orient CCW in (u,v).
    let area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    if area2 == 0.0 {
        return None; // projection degenerate, parallel to ray
    }
    let (a, b, c, area2) = if area2 < 0.0 {
        (a, c, b, -area2)
    } else {
        (a, b, c, area2)
    };
    // Half-open edge rule: e > 0, or e == 0 on edges pointing "up" (dv > 0)
    // or exactly leftward (dv == 0, du < 0). The reversed edge of the
    // adjacent triangle then rejects the same point.
    let edge = |p: [f64; 3], q: [f64; 3]| -> Option<f64> {
        let e = (q[0] - p[0]) * (pv - p[1]) - (q[1] - p[1]) * (pu - p[0]);
        let (du, dv) = (q[0] - p[0], q[1] - p[1]);
        if e > 0.0 || (e == 0.0 && (dv > 0.0 || (dv == 0.0 && du < 0.0))) {
            Some(e)
        } else {
            None
        }
    };
    let e0 = edge(a, b)?;
    let e1 = edge(b, c)?;
    let e2 = edge(c, a)?;
    // Barycentric interpolation of the ray-axis coordinate.
    let sum = e0 + e1 + e2;
    let (w0, w1, w2) = if sum > 0.0 {
        (e1 / sum, e2 / sum, e0 / sum)
    } else {
        // Point exactly on two edges (a vertex); weights collapse.
        (1.0, 0.0, 0.0)
    };
    debug_assert!(area2 > 0.0);
    Some(w0 * a[2] + w1 * b[2] + w2 * c[2])
}

/// Rasterize the mesh at `resolution`, deciding each voxel by parity of
/// ray-triangle crossings, majority-voted over the three axis directions.
pub fn voxelize(mesh: &Mesh, resolution: u32) -> Result<VoxelGrid> {
    if resolution < 8 {
        return Err(Error::ResolutionTooSmall(resolution));
    }
    let passes: Vec<Vec<u64>> = (0..3).map(|axis| rasterize_axis(mesh, resolution, axis)).collect();

    let mut grid = VoxelGrid::empty(resolution);
    let mut disagree = 0usize;
    for w in 0..grid.words.len() {
        let (a, b, c) = (passes[0][w], passes[1][w], passes[2][w]);
        grid.words[w] = (a & b) | (a & c) | (b & c);
        disagree += ((a ^ b) | (a ^ c)).count_ones() as usize;
    }
    // Words are zero-padded past N^3, so padding never disagrees.
    if disagree * 20 > grid.len() {
        log::warn!(
            "axis votes disagree on {:.1}% of voxels; mesh may not be watertight",
            100.0 * disagree as f64 / grid.len() as f64
        );
    }
    if grid.is_empty() {
        return Err(Error::EmptyModel);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn unit_cube_at(center: [f64; 3]) -> Mesh {
        let mut m = shapes::box_mesh([0.5, 0.5, 0.5]);
        for v in &mut m.vertices {
            for a in 0..3 {
                v[a] += center[a];
            }
        }
        m
    }

    #[test]
    fn normalize_centers_and_scales() {
        let m = unit_cube_at([5.0, 5.0, 5.0]);
        let out = normalize_mesh(&m, 0.9).unwrap();
        let (lo, hi) = out.bounding_box();
        for a in 0..3 {
            assert!((lo[a] + hi[a]).abs() < 1e-12, "not centered on axis {a}");
        }
        let max_norm = out
            .vertices
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
            .fold(0.0f64, f64::max);
        assert!((max_norm - 0.9).abs() < 1e-12);
    }

    #[test]
    fn normalize_is_identity_when_already_normalized() {
        let m = normalize_mesh(&unit_cube_at([3.0, -2.0, 0.5]), 0.9).unwrap();
        let again = normalize_mesh(&m, 0.9).unwrap();
        for (a, b) in m.vertices.iter().zip(&again.vertices) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalize_degenerate_mesh_fails() {
        let m = Mesh {
            vertices: vec![[1.0, 2.0, 3.0]; 3],
            triangles: vec![[0, 1, 2]],
        };
        assert!(matches!(normalize_mesh(&m, 0.9), Err(Error::ZeroExtent)));
    }

    #[test]
    fn voxelize_box_counts_exactly() {
        let m = shapes::box_mesh([0.5, 0.5, 0.5]);
        let g = voxelize(&m, 64).unwrap();
        // Centers strictly inside [-0.5,0.5]^3 form a 32^3 block.
        assert_eq!(g.count_occupied(), 32 * 32 * 32);
    }

    #[test]
    fn voxelize_flat_triangle_is_empty() {
        let m = Mesh::new(
            vec![[-0.9, -0.9, 0.0], [0.9, -0.9, 0.0], [0.0, 0.9, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(voxelize(&m, 16), Err(Error::EmptyModel)));
    }

    #[test]
    fn voxelize_rejects_small_resolution() {
        let m = shapes::box_mesh([0.5, 0.5, 0.5]);
        assert!(matches!(voxelize(&m, 7), Err(Error::ResolutionTooSmall(7))));
    }

    #[test]
    fn voxelize_is_deterministic() {
        let m = shapes::sphere_mesh(0.9, 24, 12);
        let a = voxelize(&m, 32).unwrap();
        let b = voxelize(&m, 32).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn voxelize_translation_consistency() {
        // Shift a small box by exactly one voxel pitch; the occupancy
        // pattern must shift by one cell in the interior.
        let n = 16u32;
        let pitch = 2.0 / n as f64;
        let m0 = shapes::box_mesh([0.3, 0.3, 0.3]);
        let mut m1 = m0.clone();
        for v in &mut m1.vertices {
            v[0] += pitch;
        }
        let g0 = voxelize(&m0, n).unwrap();
        let g1 = voxelize(&m1, n).unwrap();
        for z in 0..n {
            for y in 0..n {
                for x in 0..n - 1 {
                    assert_eq!(
                        g0.get(g0.index(x, y, z)),
                        g1.get(g1.index(x + 1, y, z)),
                        "mismatch at ({x},{y},{z})"
                    );
                }
            }
        }
    }

    #[test]
    fn voxelize_sphere_matches_ball_volume() {
        let m = shapes::sphere_mesh(0.9, 64, 32);
        let g = voxelize(&m, 32).unwrap();
        let expect = 4.0 / 3.0 * std::f64::consts::PI * (0.45f64 * 32.0).powi(3);
        let got = g.count_occupied() as f64;
        assert!(
            (got - expect).abs() / expect < 0.01,
            "got {got}, expected ~{expect}"
        );
    }

    #[test]
    fn support_single_voxel() {
        let mut g = VoxelGrid::empty(8);
        let idx = g.index(3, 3, 3);
        g.set(idx, true);
        let s = support_set(&g);
        assert_eq!(s.surface, vec![idx]);
        assert_eq!(s.outer.len(), 6);
        for &o in &s.outer {
            assert!(!g.get(o));
        }
    }

    #[test]
    fn support_3x3x3_block() {
        let mut g = VoxelGrid::empty(9);
        for z in 3..6 {
            for y in 3..6 {
                for x in 3..6 {
                    g.set(g.index(x, y, z), true);
                }
            }
        }
        let s = support_set(&g);
        assert_eq!(s.surface.len(), 26); // all but the center voxel
        assert_eq!(s.outer.len(), 54); // 6 faces x 9 voxels
    }

    #[test]
    fn support_matches_brute_force_scan() {
        // Random grid, cross-checked against a direct neighbor scan.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 12u32;
        let mut g = VoxelGrid::empty(n);
        for idx in 0..g.len() {
            g.set(idx, rng.gen_bool(0.3));
        }
        if g.count_occupied() == 0 {
            g.set(0, true);
        }
        let s = support_set(&g);
        let occupied_on_surface: std::collections::HashSet<usize> =
            s.surface.iter().copied().collect();
        for idx in 0..g.len() {
            let (x, y, z) = g.coords(idx);
            let mut open = 0;
            for (dx, dy, dz) in NEIGHBOR_OFFSETS {
                let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                let out = nx < 0 || ny < 0 || nz < 0 || nx >= n as i64 || ny >= n as i64 || nz >= n as i64;
                if out || !g.get(g.index(nx as u32, ny as u32, nz as u32)) {
                    open += 1;
                }
            }
            if g.get(idx) {
                assert_eq!(occupied_on_surface.contains(&idx), open > 0);
            }
        }
        // Invariants: surface ⊆ occupied, outer ∩ occupied = ∅, disjoint.
        assert!(s.surface.iter().all(|&i| g.get(i)));
        assert!(s.outer.iter().all(|&i| !g.get(i)));
    }

    #[test]
    fn support_fully_occupied_grid_has_empty_outer() {
        let mut g = VoxelGrid::empty(8);
        for idx in 0..g.len() {
            g.set(idx, true);
        }
        let s = support_set(&g);
        assert!(s.outer.is_empty());
        assert_eq!(s.surface.len(), 8 * 8 * 8 - 6 * 6 * 6);
    }

    #[test]
    fn voxb_round_trip_and_layout() {
        let mut g = VoxelGrid::empty(8);
        g.set(0, true); // (0,0,0) -> first byte bit 0
        g.set(3, true); // (3,0,0) -> first byte bit 3
        let mut buf = Vec::new();
        g.write_voxb(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"VOXB");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 8);
        assert_eq!(buf.len(), 8 + 512 / 8);
        assert_eq!(buf[8], 0b0000_1001);
        let back = VoxelGrid::read_voxb(&mut buf.as_slice()).unwrap();
        assert_eq!(back, g);
    }
}
