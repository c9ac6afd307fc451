//! Synthetic box-world scenes with a rendered depth image and grasp goals.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kinematics::RigidTransform;
use crate::scene::{DepthImage, Intrinsics};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    Tabletop,
    Shelf,
    Custom,
}

/// Axis-aligned box obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl SceneBox {
    fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    fn lo(&self) -> Vector3<f64> {
        Vector3::from(self.min)
    }

    fn hi(&self) -> Vector3<f64> {
        Vector3::from(self.max)
    }

    /// Entry distance of the ray `o + s·d`, if it hits.
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        let (lo, hi) = (self.lo(), self.hi());
        let mut near = f64::NEG_INFINITY;
        let mut far = f64::INFINITY;
        for a in 0..3 {
            if d[a].abs() < 1e-15 {
                if o[a] < lo[a] || o[a] > hi[a] {
                    return None;
                }
                continue;
            }
            let (t0, t1) = ((lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]);
            near = near.max(t0.min(t1));
            far = far.min(t0.max(t1));
        }
        (near <= far && near > 0.0).then_some(near)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels (square pixels, centered principal point).
    pub focal: f64,
}

impl CameraSpec {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.focal,
            fy: self.focal,
            cx: (self.width as f64 - 1.0) / 2.0,
            cy: (self.height as f64 - 1.0) / 2.0,
        }
    }

    /// Camera-to-base transform: `z` looks at the target, `y` points down.
    pub fn extrinsics(&self) -> Result<RigidTransform> {
        let eye = Vector3::from(self.eye);
        let z = Vector3::from(self.target) - eye;
        if z.norm() < 1e-9 {
            return Err(Error::Invalid("camera eye and target coincide".into()));
        }
        let z = z.normalize();
        let up = if z.cross(&Vector3::z()).norm() > 1e-6 {
            Vector3::z()
        } else {
            Vector3::x()
        };
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        Ok(RigidTransform::new(Matrix3::from_columns(&[x, y, z]), eye))
    }
}

/// Obstacle boxes, camera and goals of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub boxes: Vec<SceneBox>,
    pub camera: CameraSpec,
    /// Surface samples per square meter for the direct point cloud.
    pub density: f64,
    /// Goal poses as 16-element row-major matrices.
    pub goals: Vec<Vec<f64>>,
}

pub const DEFAULT_DENSITY: f64 = 2500.0;

const FINGER_REACH: f64 = 0.10;

impl SceneSpec {
    pub fn generate(kind: SceneKind, seed: u64) -> Result<Self> {
        match kind {
            SceneKind::Tabletop => Ok(tabletop(seed)),
            SceneKind::Shelf => Ok(shelf(seed)),
            SceneKind::Custom => Err(Error::Invalid(
                "custom scenes are read from a specification file".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.boxes.is_empty() {
            return Err(Error::Invalid("scene has no obstacles".into()));
        }
        if !(self.density > 0.0) {
            return Err(Error::Invalid(format!("density must be positive, got {}", self.density)));
        }
        if let Some(b) = self.boxes.iter().find(|b| (0..3).any(|a| !(b.min[a] < b.max[a]))) {
            return Err(Error::Invalid(format!("degenerate box {b:?}")));
        }
        if self.camera.width == 0 || self.camera.height == 0 || !(self.camera.focal > 0.0) {
            return Err(Error::Invalid("camera needs a positive size and focal length".into()));
        }
        Ok(())
    }

    pub fn goal_poses(&self) -> Result<Vec<RigidTransform>> {
        self.goals
            .iter()
            .map(|g| RigidTransform::from_row_major(g).map(|t| t.orthonormalized()))
            .collect()
    }

    /// Uniform random samples on every box face at the scene density.
    pub fn sample_cloud(&self, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for b in &self.boxes {
            let (lo, hi) = (b.lo(), b.hi());
            let ext = hi - lo;
            for axis in 0..3 {
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                let count = (ext[u] * ext[v] * self.density).ceil().max(1.0) as usize;
                for side in [lo[axis], hi[axis]] {
                    for _ in 0..count {
                        let mut p = Vector3::zeros();
                        p[axis] = side;
                        p[u] = rng.gen_range(lo[u]..=hi[u]);
                        p[v] = rng.gen_range(lo[v]..=hi[v]);
                        out.push(p);
                    }
                }
            }
        }
        out
    }

    /// Ray-cast depth image of the boxes; misses are invalid (zero) pixels.
    pub fn render_depth(&self) -> Result<DepthImage> {
        let cam = &self.camera;
        let k = cam.intrinsics();
        let ext = cam.extrinsics()?;
        let mut depth = vec![0.0; cam.width * cam.height];
        for v in 0..cam.height {
            for u in 0..cam.width {
                let dir_cam = Vector3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
                let dir = ext.rotate(&dir_cam);
                let hit = self
                    .boxes
                    .iter()
                    .filter_map(|b| b.intersect(&ext.translation, &dir))
                    .fold(f64::INFINITY, f64::min);
                if hit.is_finite() {
                    // Unit camera-z ray: the ray parameter is the depth.
                    depth[v * cam.width + u] = hit;
                }
            }
        }
        DepthImage::new(cam.width, cam.height, depth, k, ext)
    }
}

fn pose_row_major(rotation: Matrix3<f64>, origin: Vector3<f64>) -> Vec<f64> {
    RigidTransform::new(rotation, origin).to_row_major().to_vec()
}

/// Object footprints `(center_x, center_y, half_width, height)` that keep a
/// minimum spacing, drawn until `count` fit.
fn place_objects(
    rng: &mut ChaCha8Rng,
    count: usize,
    x: (f64, f64),
    y: (f64, f64),
    spacing: f64,
) -> Vec<(f64, f64, f64, f64)> {
    let mut placed: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut attempts = 0;
    while placed.len() < count && attempts < 1000 {
        attempts += 1;
        let c = (rng.gen_range(x.0..x.1), rng.gen_range(y.0..y.1));
        if placed
            .iter()
            .all(|p| ((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).sqrt() >= spacing)
        {
            placed.push((c.0, c.1, rng.gen_range(0.02..0.03), rng.gen_range(0.10..0.14)));
        }
    }
    placed
}

fn tabletop(seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = 0.25;
    let mut boxes = vec![SceneBox::new([0.35, -0.5, top - 0.05], [1.0, 0.5, top])];
    let count = rng.gen_range(1..=3);
    let objects = place_objects(&mut rng, count, (0.45, 0.65), (-0.15, 0.15), 0.22);
    let mut goals = Vec::new();
    let down = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    for &(cx, cy, hw, h) in &objects {
        boxes.push(SceneBox::new([cx - hw, cy - hw, top], [cx + hw, cy + hw, top + h]));
        let base_yaw = rng.gen_range(-0.3..0.3);
        for k in 0..4 {
            let yaw = base_yaw + k as f64 * PI / 4.0;
            let rz = *nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix();
            let origin = Vector3::new(cx, cy, top + h + FINGER_REACH);
            goals.push(pose_row_major(rz * down, origin));
        }
    }
    SceneSpec {
        kind: SceneKind::Tabletop,
        boxes,
        camera: CameraSpec {
            eye: [0.3, 0.0, 1.6],
            target: [0.6, 0.0, 0.25],
            width: 320,
            height: 240,
            focal: 300.0,
        },
        density: DEFAULT_DENSITY,
        goals,
    }
}

fn shelf(seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (front, back) = (0.55, 0.9);
    let (half_w, t) = (0.4, 0.02);
    let (low, high) = (0.35, 0.75);
    let mut boxes = vec![
        SceneBox::new([front, -half_w, low - t], [back, half_w, low]),
        SceneBox::new([front, -half_w, high], [back, half_w, high + t]),
        SceneBox::new([back, -half_w - t, low - t], [back + t, half_w + t, high + t]),
        SceneBox::new([front, -half_w - t, low - t], [back, -half_w, high + t]),
        SceneBox::new([front, half_w, low - t], [back, half_w + t, high + t]),
    ];
    let count = rng.gen_range(1..=2);
    let objects = place_objects(&mut rng, count, (0.62, 0.7), (-0.15, 0.15), 0.24);
    let mut goals = Vec::new();
    // Approach along +x with the fingers spread horizontally.
    let forward = Matrix3::from_columns(&[-Vector3::z(), Vector3::y(), Vector3::x()]);
    for &(cx, cy, hw, h) in &objects {
        boxes.push(SceneBox::new([cx - hw, cy - hw, low], [cx + hw, cy + hw, low + h]));
        for (k, yaw) in [-0.2, 0.0, 0.2].into_iter().enumerate() {
            let rz = *nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix();
            let approach = rz * Vector3::x();
            let preferred = if k == 1 { 0.08 } else { 0.07 };
            let grasp_h = f64::min(preferred, h - 0.03);
            let center = Vector3::new(cx, cy, low + grasp_h);
            let origin = center - approach * (hw + FINGER_REACH);
            goals.push(pose_row_major(rz * forward, origin));
        }
    }
    SceneSpec {
        kind: SceneKind::Shelf,
        boxes,
        camera: CameraSpec {
            eye: [-0.3, 0.0, 0.6],
            target: [0.7, 0.0, 0.45],
            width: 320,
            height: 240,
            focal: 300.0,
        },
        density: DEFAULT_DENSITY,
        goals,
    }
}
