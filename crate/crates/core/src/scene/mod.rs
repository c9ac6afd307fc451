//! Scene point clouds, depth back-projection and the signed distance grid.

pub mod io;
mod kdtree;
mod sdf;

use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::kinematics::RigidTransform;
use crate::{Error, Result};

pub use kdtree::KdTree;
pub use sdf::{
    build_sdf, check_trajectory_collision, collision_penalty, collision_penalty_slope,
    count_negative_points, CollisionReport, SignedDistanceGrid, COLLISION_POINT_THRESHOLD,
    DEFAULT_MARGIN, DEFAULT_RESOLUTION, OUTSIDE_DISTANCE,
};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    /// Row-major depth in meters; `0` or NaN marks an invalid pixel.
    pub depth: Vec<f64>,
    pub intrinsics: Intrinsics,
    /// Camera frame to robot base frame.
    pub extrinsics: RigidTransform,
}

impl DepthImage {
    pub fn new(
        width: usize,
        height: usize,
        depth: Vec<f64>,
        intrinsics: Intrinsics,
        extrinsics: RigidTransform,
    ) -> Result<Self> {
        if depth.len() != width * height {
            return Err(Error::Dimension {
                expected: width * height,
                actual: depth.len(),
            });
        }
        let k = &intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(Error::Invalid("focal lengths must be positive".into()));
        }
        if !(k.cx >= 0.0 && k.cx < width as f64 && k.cy >= 0.0 && k.cy < height as f64) {
            return Err(Error::Invalid(format!(
                "principal point ({}, {}) outside a {width}x{height} image",
                k.cx, k.cy
            )));
        }
        Ok(Self {
            width,
            height,
            depth,
            intrinsics,
            extrinsics,
        })
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> Option<f64> {
        let d = self.depth[v * self.width + u];
        (d.is_finite() && d > 0.0).then_some(d)
    }

    /// Pixel `(u, v)` and camera-frame depth of a base-frame point. Returns
    /// `None` behind the camera or outside the image.
    pub fn project(&self, p_base: &Vector3<f64>) -> Option<(usize, usize, f64)> {
        let p = self.extrinsics.inverse().transform_point(p_base);
        self.project_camera(&p)
    }

    pub(crate) fn project_camera(&self, p: &Vector3<f64>) -> Option<(usize, usize, f64)> {
        if !(p.z > 0.0) {
            return None;
        }
        let k = &self.intrinsics;
        let u = (k.fx * p.x / p.z + k.cx).round();
        let v = (k.fy * p.y / p.z + k.cy).round();
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize, p.z))
    }

    /// Whether a base-frame point lies behind the observed surface.
    pub fn is_behind(&self, p_base: &Vector3<f64>) -> bool {
        match self.project(p_base) {
            Some((u, v, z)) => self.at(u, v).is_some_and(|d| z > d),
            None => false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    /// Points in the robot base frame.
    pub points: Vec<Vector3<f64>>,
    /// Depth image the points came from, used to sign the distance field.
    pub source: Option<Arc<DepthImage>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Invalid("point cloud has non-finite coordinates".into()));
        }
        Ok(Self {
            points,
            source: None,
        })
    }

    pub fn with_source(mut self, depth: Arc<DepthImage>) -> Self {
        self.source = Some(depth);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Back-projects every valid pixel into the base frame. The returned cloud
/// keeps the depth image as its sign source.
pub fn backproject(depth: &Arc<DepthImage>) -> PointCloud {
    let k = &depth.intrinsics;
    let mut points = Vec::new();
    for v in 0..depth.height {
        for u in 0..depth.width {
            let Some(d) = depth.at(u, v) else { continue };
            let cam = Vector3::new(
                (u as f64 - k.cx) * d / k.fx,
                (v as f64 - k.cy) * d / k.fy,
                d,
            );
            points.push(depth.extrinsics.transform_point(&cam));
        }
    }
    PointCloud {
        points,
        source: Some(Arc::clone(depth)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera(width: usize, height: usize, depth: Vec<f64>) -> Arc<DepthImage> {
        Arc::new(
            DepthImage::new(
                width,
                height,
                depth,
                Intrinsics {
                    fx: 100.0,
                    fy: 120.0,
                    cx: 4.0,
                    cy: 3.0,
                },
                RigidTransform::identity(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn principal_point_and_one_focal_offset() {
        let mut d = vec![0.0; 8 * 6];
        d[3 * 8 + 4] = 2.0;
        let cloud = backproject(&camera(8, 6, d));
        assert_eq!(cloud.points, vec![Vector3::new(0.0, 0.0, 2.0)]);

        // u = cx + fx needs a wide image.
        let w = 110;
        let mut d = vec![0.0; w * 6];
        d[3 * w + 104] = 1.0;
        let cloud = backproject(&camera(w, 6, d));
        assert_eq!(cloud.points, vec![Vector3::new(1.0, 0.0, 1.0)]);
    }

    #[test]
    fn invalid_pixels_give_empty_cloud() {
        let mut d = vec![0.0; 8 * 6];
        d[5] = f64::NAN;
        assert!(backproject(&camera(8, 6, d)).is_empty());
    }

    #[test]
    fn intrinsics_are_validated() {
        let k = Intrinsics {
            fx: 100.0,
            fy: 100.0,
            cx: 10.0,
            cy: 3.0,
        };
        assert!(DepthImage::new(8, 6, vec![0.0; 48], k, RigidTransform::identity()).is_err());
        let k = Intrinsics { fx: 0.0, cx: 4.0, ..k };
        assert!(DepthImage::new(8, 6, vec![0.0; 48], k, RigidTransform::identity()).is_err());
    }

    #[test]
    fn projection_inverts_backprojection() {
        let ext = RigidTransform::from_xyz_rpy([0.2, -0.1, 1.0], [2.5, 0.1, -0.4]);
        let w = 20;
        let h = 15;
        let depth: Vec<f64> = (0..w * h).map(|i| 0.5 + (i % 7) as f64 * 0.1).collect();
        let img = Arc::new(
            DepthImage::new(
                w,
                h,
                depth,
                Intrinsics {
                    fx: 30.0,
                    fy: 32.0,
                    cx: 9.5,
                    cy: 7.0,
                },
                ext,
            )
            .unwrap(),
        );
        let cloud = backproject(&img);
        for (i, p) in cloud.points.iter().enumerate() {
            let (u, v, z) = img.project(p).unwrap();
            assert_eq!((u, v), (i % w, i / w));
            assert!((z - img.depth[i]).abs() < 1e-9);
            let k = img.intrinsics;
            let cam = Vector3::new((u as f64 - k.cx) * z / k.fx, (v as f64 - k.cy) * z / k.fy, z);
            assert!((ext.transform_point(&cam) - p).norm() < 1e-9);
        }
    }
}
