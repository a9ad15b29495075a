//! Analytic test meshes: sphere, box, torus. Used by tests and handy for
//! desk-scale experiments without external model files.

use crate::geometry::Mesh;

/// UV sphere centered at the origin.
pub fn sphere_mesh(radius: f64, segments: usize, rings: usize) -> Mesh {
    assert!(segments >= 3 && rings >= 2);
    let mut vertices = Vec::with_capacity(segments * (rings - 1) + 2);
    vertices.push([0.0, 0.0, radius]); // north pole
    for r in 1..rings {
        let phi = std::f64::consts::PI * r as f64 / rings as f64;
        let (sp, cp) = phi.sin_cos();
        for s in 0..segments {
            let theta = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            let (st, ct) = theta.sin_cos();
            vertices.push([radius * sp * ct, radius * sp * st, radius * cp]);
        }
    }
    vertices.push([0.0, 0.0, -radius]); // south pole
    let south = vertices.len() - 1;

    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + (s % segments);
    let mut triangles = Vec::new();
    for s in 0..segments {
        triangles.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b) = (ring(r, s), ring(r, s + 1));
            let (c, d) = (ring(r + 1, s), ring(r + 1, s + 1));
            triangles.push([a, c, b]);
            triangles.push([b, c, d]);
        }
    }
    for s in 0..segments {
        triangles.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    Mesh { vertices, triangles }
}

/// Axis-aligned box centered at the origin, 12 triangles.
pub fn box_mesh(half_extents: [f64; 3]) -> Mesh {
    let [hx, hy, hz] = half_extents;
    let vertices = vec![
        [-hx, -hy, -hz],
        [hx, -hy, -hz],
        [hx, hy, -hz],
        [-hx, hy, -hz],
        [-hx, -hy, hz],
        [hx, -hy, hz],
        [hx, hy, hz],
        [-hx, hy, hz],
    ];
    let triangles = vec![
        [0, 2, 1],
        [0, 3, 2], // bottom (z-)
        [4, 5, 6],
        [4, 6, 7], // top (z+)
        [0, 1, 5],
        [0, 5, 4], // front (y-)
        [2, 3, 7],
        [2, 7, 6], // back (y+)
        [0, 4, 7],
        [0, 7, 3], // left (x-)
        [1, 2, 6],
        [1, 6, 5], // right (x+)
    ];
    Mesh { vertices, triangles }
}

/// Torus around the z axis: `major_r` to the tube center, tube radius `minor_r`.
pub fn torus_mesh(major_r: f64, minor_r: f64, segments_major: usize, segments_minor: usize) -> Mesh {
    assert!(segments_major >= 3 && segments_minor >= 3);
    let mut vertices = Vec::with_capacity(segments_major * segments_minor);
    for i in 0..segments_major {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / segments_major as f64;
        let (st, ct) = theta.sin_cos();
        for j in 0..segments_minor {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / segments_minor as f64;
            let (sp, cp) = phi.sin_cos();
            let d = major_r + minor_r * cp;
            vertices.push([d * ct, d * st, minor_r * sp]);
        }
    }
    let at = |i: usize, j: usize| (i % segments_major) * segments_minor + (j % segments_minor);
    let mut triangles = Vec::new();
    for i in 0..segments_major {
        for j in 0..segments_minor {
            let (a, b) = (at(i, j), at(i + 1, j));
            let (c, d) = (at(i, j + 1), at(i + 1, j + 1));
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    Mesh { vertices, triangles }
}
