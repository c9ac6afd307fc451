//! File formats for scene data.
//!
//! * Point clouds: ASCII XYZ (one `x y z` triple per line) and ASCII PLY.
//! * Depth images: 16-bit PGM in millimeters plus a camera sidecar holding
//!   `fx fy cx cy` followed by the 12 entries of the 3x4 camera-to-base
//!   extrinsic matrix, row-major.
//! * Signed distance grids: a text header line `ox oy oz resolution nx ny nz`
//!   followed by `nx*ny*nz` little-endian `f32` values, x fastest.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::{DepthImage, Intrinsics, PointCloud, SignedDistanceGrid};
use crate::kinematics::RigidTransform;
use crate::{Error, Result};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn parse_xyz(text: &str) -> Result<Vec<Vector3<f64>>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse(format!("xyz line {}: `{line}`", n + 1)))?;
        if vals.len() != 3 {
            return Err(Error::Parse(format!(
                "xyz line {}: expected 3 values, got {}",
                n + 1,
                vals.len()
            )));
        }
        out.push(Vector3::new(vals[0], vals[1], vals[2]));
    }
    Ok(out)
}

pub fn parse_ply(text: &str) -> Result<Vec<Vector3<f64>>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::Parse("missing `ply` magic".into()));
    }
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    let mut ascii = false;
    for line in lines.by_ref() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", ..] => ascii = true,
            ["format", other, ..] => {
                return Err(Error::Parse(format!("unsupported PLY format `{other}`")))
            }
            ["element", "vertex", n] => {
                vertex_count = Some(
                    n.parse::<usize>()
                        .map_err(|_| Error::Parse(format!("bad vertex count `{n}`")))?,
                );
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", "list", ..] => {}
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    if !ascii {
        return Err(Error::Parse("PLY header has no ascii format line".into()));
    }
    let count = vertex_count.ok_or_else(|| Error::Parse("PLY has no vertex element".into()))?;
    let col = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::Parse(format!("PLY vertex has no `{name}` property")))
    };
    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("PLY ended before all vertices".into()))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse(format!("bad PLY vertex `{line}`")))?;
        if vals.len() < props.len() {
            return Err(Error::Parse(format!("short PLY vertex `{line}`")));
        }
        out.push(Vector3::new(vals[ix], vals[iy], vals[iz]));
    }
    Ok(out)
}

/// Loads a cloud by extension (`.ply`, otherwise XYZ).
pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let text = read_text(path)?;
    let is_ply = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    let points = if is_ply {
        parse_ply(&text)?
    } else {
        parse_xyz(&text)?
    };
    PointCloud::new(points)
}

pub fn write_xyz(path: &Path, points: &[Vector3<f64>]) -> Result<()> {
    let mut s = String::with_capacity(points.len() * 32);
    for p in points {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    write_bytes(path, s.as_bytes())
}

pub fn write_ply(path: &Path, points: &[Vector3<f64>]) -> Result<()> {
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        points.len()
    );
    for p in points {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    write_bytes(path, s.as_bytes())
}

fn pgm_tokens<R: BufRead>(reader: &mut R, count: usize) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    while tokens.len() < count {
        let mut line = String::new();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| Error::Parse(format!("PGM header: {e}")))?;
        if n == 0 {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        let content = line.split('#').next().unwrap_or("");
        tokens.extend(content.split_whitespace().map(str::to_string));
    }
    Ok(tokens)
}

/// Reads a 16-bit PGM (binary `P5` or ASCII `P2`) and returns
/// `(width, height, depth in meters)`.
pub fn read_pgm_depth(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let header = pgm_tokens(&mut reader, 4)?;
    if header.len() != 4 {
        return Err(Error::Parse("PGM header must end on its own line".into()));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad PGM header value `{s}`")))
    };
    let (w, h, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
    let n = w * h;
    let millimeters: Vec<u16> = match header[0].as_str() {
        "P5" => {
            if maxval < 256 {
                return Err(Error::Parse("depth PGM must be 16-bit".into()));
            }
            let mut raw = vec![0u8; 2 * n];
            reader
                .read_exact(&mut raw)
                .map_err(|_| Error::Parse("truncated PGM data".into()))?;
            raw.chunks_exact(2)
                .map(|b| u16::from_be_bytes([b[0], b[1]]))
                .collect()
        }
        "P2" => {
            let mut rest = String::new();
            reader
                .read_to_string(&mut rest)
                .map_err(|e| Error::Parse(format!("PGM data: {e}")))?;
            let vals: Vec<u16> = rest
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse("bad PGM pixel".into()))?;
            if vals.len() != n {
                return Err(Error::Parse("PGM pixel count mismatch".into()));
            }
            vals
        }
        other => return Err(Error::Parse(format!("unsupported PGM magic `{other}`"))),
    };
    Ok((w, h, millimeters.iter().map(|&mm| mm as f64 / 1000.0).collect()))
}

pub fn write_pgm_depth(path: &Path, width: usize, height: usize, depth: &[f64]) -> Result<()> {
    let mut bytes = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &d in depth {
        let mm = if d.is_finite() && d > 0.0 {
            (d * 1000.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        bytes.extend_from_slice(&mm.to_be_bytes());
    }
    write_bytes(path, &bytes)
}

pub fn parse_camera(text: &str) -> Result<(Intrinsics, RigidTransform)> {
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse("camera file must contain numbers only".into()))?;
    if vals.len() != 16 {
        return Err(Error::Parse(format!(
            "camera file needs 16 numbers (fx fy cx cy + 3x4 extrinsics), got {}",
            vals.len()
        )));
    }
    let k = Intrinsics {
        fx: vals[0],
        fy: vals[1],
        cx: vals[2],
        cy: vals[3],
    };
    let e = &vals[4..];
    let rot = Matrix3::new(e[0], e[1], e[2], e[4], e[5], e[6], e[8], e[9], e[10]);
    let ext = RigidTransform::new(rot, Vector3::new(e[3], e[7], e[11]));
    if !ext.is_rigid(1e-6) {
        return Err(Error::Parse("camera extrinsic rotation is not orthonormal".into()));
    }
    Ok((k, ext.orthonormalized()))
}

pub fn format_camera(k: &Intrinsics, ext: &RigidTransform) -> String {
    let m = ext.to_row_major();
    let mut s = format!("{} {} {} {}\n", k.fx, k.fy, k.cx, k.cy);
    for r in 0..3 {
        let _ = writeln!(s, "{} {} {} {}", m[4 * r], m[4 * r + 1], m[4 * r + 2], m[4 * r + 3]);
    }
    s
}

/// Sidecar path for a depth image: `scene.pgm` -> `scene.cam`.
pub fn camera_sidecar(depth_path: &Path) -> std::path::PathBuf {
    depth_path.with_extension("cam")
}

pub fn read_depth_image(pgm: &Path, camera: &Path) -> Result<DepthImage> {
    let (w, h, depth) = read_pgm_depth(pgm)?;
    let (k, ext) = parse_camera(&read_text(camera)?)?;
    DepthImage::new(w, h, depth, k, ext)
}

pub fn write_depth_image(pgm: &Path, camera: &Path, img: &DepthImage) -> Result<()> {
    write_pgm_depth(pgm, img.width, img.height, &img.depth)?;
    write_bytes(camera, format_camera(&img.intrinsics, &img.extrinsics).as_bytes())
}

pub fn write_sdf(path: &Path, grid: &SignedDistanceGrid) -> Result<()> {
    let o = grid.origin;
    let [nx, ny, nz] = grid.dims;
    let mut bytes = format!(
        "{} {} {} {} {} {} {}\n",
        o.x, o.y, o.z, grid.resolution, nx, ny, nz
    )
    .into_bytes();
    bytes.reserve(4 * grid.values.len());
    for &v in &grid.values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_sdf(path: &Path) -> Result<SignedDistanceGrid> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse("SDF file has no header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::Parse("SDF header is not text".into()))?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 7 {
        return Err(Error::Parse(format!(
            "SDF header needs `ox oy oz resolution nx ny nz`, got `{header}`"
        )));
    }
    let f = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad SDF header value `{s}`")))
    };
    let u = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad SDF dimension `{s}`")))
    };
    let origin = Vector3::new(f(tok[0])?, f(tok[1])?, f(tok[2])?);
    let resolution = f(tok[3])?;
    let dims = [u(tok[4])?, u(tok[5])?, u(tok[6])?];
    let data = &bytes[nl + 1..];
    let n = dims[0] * dims[1] * dims[2];
    if data.len() != 4 * n {
        return Err(Error::Parse(format!(
            "SDF payload has {} bytes, expected {}",
            data.len(),
            4 * n
        )));
    }
    let values = data
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    SignedDistanceGrid::from_parts(origin, resolution, dims, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::build_sdf;

    #[test]
    fn xyz_and_ply_parse() {
        let pts = parse_xyz("# c\n1 2 3\n\n4.5 -1 0\n").unwrap();
        assert_eq!(pts.len(), 2);
        assert!(parse_xyz("1 2\n").is_err());
        let ply = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float y\nproperty float x\nproperty float z\nproperty uchar red\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n1 2 3 255\n4 5 6 0\n";
        let pts = parse_ply(ply).unwrap();
        assert_eq!(pts[0], Vector3::new(2.0, 1.0, 3.0));
        assert_eq!(pts[1], Vector3::new(5.0, 4.0, 6.0));
        assert!(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
    }

    #[test]
    fn depth_and_camera_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let k = Intrinsics {
            fx: 50.0,
            fy: 51.0,
            cx: 1.5,
            cy: 1.0,
        };
        let ext = RigidTransform::from_xyz_rpy([0.1, 0.2, 1.3], [3.0, 0.1, -0.2]);
        let img = DepthImage::new(3, 2, vec![0.0, 1.234, 65.0, f64::NAN, 0.5, 2.0], k, ext).unwrap();
        let pgm = dir.path().join("d.pgm");
        let cam = camera_sidecar(&pgm);
        write_depth_image(&pgm, &cam, &img).unwrap();
        let back = read_depth_image(&pgm, &cam).unwrap();
        assert_eq!(back.depth, vec![0.0, 1.234, 65.0, 0.0, 0.5, 2.0]);
        assert_eq!(back.intrinsics, k);
        assert!((back.extrinsics.rotation - ext.rotation).abs().max() < 1e-12);
    }

    #[test]
    fn sdf_round_trip_is_f32_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = PointCloud::new(vec![Vector3::new(0.1, 0.2, 0.3), Vector3::new(-0.2, 0.0, 0.1)])
            .unwrap();
        let grid = build_sdf(&cloud, 0.05, 0.1).unwrap();
        let path = dir.path().join("g.sdf");
        write_sdf(&path, &grid).unwrap();
        let back = read_sdf(&path).unwrap();
        assert_eq!(back.dims, grid.dims);
        assert_eq!(back.origin, grid.origin);
        for (a, b) in back.values.iter().zip(&grid.values) {
            assert_eq!(*a, *b as f32 as f64);
        }
        let truncated = dir.path().join("t.sdf");
        std::fs::write(&truncated, &std::fs::read(&path).unwrap()[..100]).unwrap();
        assert!(read_sdf(&truncated).is_err());
    }
}
