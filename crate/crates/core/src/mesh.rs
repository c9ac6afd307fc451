//! Vertex-only mesh loading for Wavefront OBJ and ASCII STL files.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::Vector3;

use crate::{Error, Result};

/// Reads the distinct vertices of an OBJ (`v x y z`) or ASCII STL
/// (`vertex x y z`) mesh, in file order. Faces are ignored.
pub fn load_vertices(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let keyword = match ext.as_deref() {
        Some("obj") => "v",
        Some("stl") => "vertex",
        _ => {
            return Err(Error::Mesh {
                path: path.to_path_buf(),
                reason: "unsupported mesh format (expected .obj or ASCII .stl)".into(),
            })
        }
    };
    let verts = parse_vertices(&text, keyword).map_err(|reason| Error::Mesh {
        path: path.to_path_buf(),
        reason,
    })?;
    if verts.is_empty() {
        return Err(Error::Mesh {
            path: path.to_path_buf(),
            reason: "no vertices".into(),
        });
    }
    Ok(verts)
}

fn parse_vertices(text: &str, keyword: &str) -> std::result::Result<Vec<Vector3<f64>>, String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        if tok.next() != Some(keyword) {
            continue;
        }
        let mut xyz = [0.0; 3];
        for v in xyz.iter_mut() {
            *v = tok
                .next()
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("line {}: bad vertex `{line}`", lineno + 1))?;
        }
        let key = xyz.map(f64::to_bits);
        if seen.insert(key) {
            out.push(Vector3::from(xyz));
        }
    }
    Ok(out)
}
