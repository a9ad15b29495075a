//! Minimal mesh loaders: ASCII OBJ (v/f records) and binary STL.

use crate::error::{Error, Result};
use crate::geometry::Mesh;
use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

/// Load OBJ or STL, deciding by extension (falls back to content sniffing).
pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("obj") => load_obj(path),
        Some("stl") => load_stl(path),
        _ => {
            // Sniff: binary STL never starts with "v " or "#".
            let mut head = [0u8; 6];
            let n = std::fs::File::open(path)?.read(&mut head)?;
            if n >= 2 && (head.starts_with(b"v ") || head.starts_with(b"#") || head.starts_with(b"o ")) {
                load_obj(path)
            } else {
                load_stl(path)
            }
        }
    }
}

pub fn load_obj(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    let perr = |msg: String| Error::Parse {
        path: path.display().to_string(),
        msg,
    };
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut v = [0.0; 3];
                for coord in &mut v {
                    *coord = it
                        .next()
                        .ok_or_else(|| perr(format!("line {}: short v record", lineno + 1)))?
                        .parse::<f64>()
                        .map_err(|e| perr(format!("line {}: {}", lineno + 1, e)))?;
                }
                vertices.push(v);
            }
            Some("f") => {
                // Face entries may be "i", "i/j", "i/j/k", or "i//k";
                // only the vertex index matters here. Fan-triangulate.
                let idx: Vec<usize> = it
                    .map(|tok| {
                        let first = tok.split('/').next().unwrap_or(tok);
                        let i: i64 = first
                            .parse()
                            .map_err(|e| perr(format!("line {}: {}", lineno + 1, e)))?;
                        let resolved = if i < 0 {
                            vertices.len() as i64 + i
                        } else {
                            i - 1
                        };
                        if resolved < 0 || resolved as usize >= vertices.len() {
                            return Err(perr(format!(
                                "line {}: vertex index {} out of range",
                                lineno + 1,
                                i
                            )));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(perr(format!("line {}: face with <3 vertices", lineno + 1)));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {} // vn, vt, comments, groups: ignored
        }
    }
    Mesh::new(vertices, triangles).map_err(|e| perr(e.to_string()))
}

pub fn load_stl(path: &Path) -> Result<Mesh> {
    let bytes = std::fs::read(path)?;
    let perr = |msg: &str| Error::Parse {
        path: path.display().to_string(),
        msg: msg.to_string(),
    };
    if bytes.len() < 84 {
        return Err(perr("file too short for binary STL"));
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    if bytes.len() < 84 + count * 50 {
        return Err(perr("truncated binary STL"));
    }
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::with_capacity(count);
    // Dedupe vertices by exact bit pattern so shared edges stay shared.
    let mut seen: HashMap<[u32; 3], usize> = HashMap::new();
    for t in 0..count {
        let rec = &bytes[84 + t * 50..84 + t * 50 + 50];
        let mut tri = [0usize; 3];
        for (v, slot) in tri.iter_mut().enumerate() {
            let off = 12 + v * 12; // skip the normal
            let mut key = [0u32; 3];
            let mut pos = [0.0f64; 3];
            for a in 0..3 {
                let raw = u32::from_le_bytes(rec[off + a * 4..off + a * 4 + 4].try_into().unwrap());
                key[a] = raw;
                pos[a] = f32::from_bits(raw) as f64;
            }
            *slot = *seen.entry(key).or_insert_with(|| {
                vertices.push(pos);
                vertices.len() - 1
            });
        }
        triangles.push(tri);
    }
    Mesh::new(vertices, triangles).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}
