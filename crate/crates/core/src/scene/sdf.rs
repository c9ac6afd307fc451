use nalgebra::Vector3;
use rayon::prelude::*;

use super::{KdTree, PointCloud};
use crate::kinematics::{JointConfig, KinematicChain};
use crate::planner::TrajectoryPlan;
use crate::robot_model::{self, SurfacePointSet};
use crate::{Error, Result};

pub const DEFAULT_RESOLUTION: f64 = 0.05;
pub const DEFAULT_MARGIN: f64 = 0.3;
/// Signed distance reported outside the grid (free space).
pub const OUTSIDE_DISTANCE: f64 = 1.0e3;
/// A configuration collides when at least this many robot points are negative.
pub const COLLISION_POINT_THRESHOLD: usize = 5;

/// Signed distances sampled on a regular grid. Vertex `(i, j, k)` sits at
/// `origin + resolution * (i, j, k)`; values are stored with `i` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedDistanceGrid {
    pub origin: Vector3<f64>,
    pub resolution: f64,
    pub dims: [usize; 3],
    pub values: Vec<f64>,
    pub margin: f64,
    /// Grid origin in units of `resolution` when the grid was built here;
    /// keeps vertex positions bit-identical across grids of different extent.
    lattice: Option<[i64; 3]>,
}

impl SignedDistanceGrid {
    pub fn from_parts(
        origin: Vector3<f64>,
        resolution: f64,
        dims: [usize; 3],
        values: Vec<f64>,
    ) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Invalid(format!("bad grid resolution {resolution}")));
        }
        let n = dims[0] * dims[1] * dims[2];
        if values.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("grid contains non-finite values".into()));
        }
        Ok(Self {
            origin,
            resolution,
            dims,
            values,
            margin: 0.0,
            lattice: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn vertex(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        match self.lattice {
            Some(l) => Vector3::new(
                (l[0] + i as i64) as f64 * self.resolution,
                (l[1] + j as i64) as f64 * self.resolution,
                (l[2] + k as i64) as f64 * self.resolution,
            ),
            None => self.origin + Vector3::new(i as f64, j as f64, k as f64) * self.resolution,
        }
    }

    pub fn value_at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.flat_index(i, j, k)]
    }

    /// Grid vertex whose cell contains `p`, if inside the grid.
    #[inline]
    pub fn cell_of(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.resolution).round();
            if !(f >= 0.0 && f < self.dims[a] as f64) {
                return None;
            }
            idx[a] = f as usize;
        }
        Some(idx)
    }

    /// Signed distance of the cell containing `p`; [`OUTSIDE_DISTANCE`]
    /// outside the grid.
    #[inline]
    pub fn query(&self, p: &Vector3<f64>) -> f64 {
        match self.cell_of(p) {
            Some([i, j, k]) => self.values[self.flat_index(i, j, k)],
            None => OUTSIDE_DISTANCE,
        }
    }

    /// Central-difference gradient of [`Self::query`] with step equal to the
    /// resolution. Falls back to a one-sided difference at the grid border.
    pub fn gradient(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let h = self.resolution;
        let center = self.query(p);
        let mut g = Vector3::zeros();
        for a in 0..3 {
            let mut fwd = *p;
            fwd[a] += h;
            let mut bwd = *p;
            bwd[a] -= h;
            let f = self.cell_of(&fwd).map(|c| self.values[self.flat_index(c[0], c[1], c[2])]);
            let b = self.cell_of(&bwd).map(|c| self.values[self.flat_index(c[0], c[1], c[2])]);
            g[a] = match (f, b) {
                (Some(f), Some(b)) => (f - b) / (2.0 * h),
                (Some(f), None) if center < OUTSIDE_DISTANCE => (f - center) / h,
                (None, Some(b)) if center < OUTSIDE_DISTANCE => (center - b) / h,
                _ => 0.0,
            };
        }
        g
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Builds the signed distance grid over the cloud's bounding box expanded by
/// `margin`. Magnitudes are exact nearest-neighbour distances; a vertex is
/// negative when the cloud's source depth image sees a surface in front of it.
/// Clouds without a source image produce an unsigned (all non-negative) grid.
pub fn build_sdf(cloud: &PointCloud, resolution: f64, margin: f64) -> Result<SignedDistanceGrid> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::Invalid(format!("bad grid resolution {resolution}")));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::Invalid(format!("bad grid margin {margin}")));
    }
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in &cloud.points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let mut lattice = [0i64; 3];
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let first = ((lo[a] - margin) / resolution).floor() as i64;
        let last = ((hi[a] + margin) / resolution).ceil() as i64;
        lattice[a] = first;
        dims[a] = (last - first + 1) as usize;
    }
    let origin = Vector3::new(
        lattice[0] as f64 * resolution,
        lattice[1] as f64 * resolution,
        lattice[2] as f64 * resolution,
    );
    let mut grid = SignedDistanceGrid {
        origin,
        resolution,
        dims,
        values: Vec::new(),
        margin,
        lattice: Some(lattice),
    };

    let tree = KdTree::new(&cloud.points);
    let camera = cloud
        .source
        .as_ref()
        .map(|img| (img.as_ref(), img.extrinsics.inverse()));
    let slice = dims[0] * dims[1];
    let values: Vec<f64> = (0..dims[2])
        .into_par_iter()
        .flat_map_iter(|k| {
            let grid = &grid;
            let tree = &tree;
            (0..slice).map(move |ij| {
                let v = grid.vertex(ij % dims[0], ij / dims[0], k);
                let (nearest, _) = tree.nearest(&v).expect("cloud is non-empty");
                let dist = (v - cloud.points[nearest]).norm();
                let behind = camera.is_some_and(|(img, to_cam)| {
                    match img.project_camera(&to_cam.transform_point(&v)) {
                        Some((u, vv, z)) => img.at(u, vv).is_some_and(|d| z > d),
                        None => false,
                    }
                });
                if behind {
                    -dist
                } else {
                    dist
                }
            })
        })
        .collect();
    grid.values = values;
    Ok(grid)
}

/// Collision cost of a single point at signed distance `d` with margin `eps`.
#[inline]
pub fn collision_penalty(d: f64, eps: f64) -> f64 {
    if d < 0.0 {
        -d + 0.5 * eps
    } else if d <= eps {
        (d - eps) * (d - eps) / (2.0 * eps)
    } else {
        0.0
    }
}

/// Derivative of [`collision_penalty`] with respect to `d`.
#[inline]
pub fn collision_penalty_slope(d: f64, eps: f64) -> f64 {
    if d < 0.0 {
        -1.0
    } else if d <= eps {
        (d - eps) / eps
    } else {
        0.0
    }
}

/// Number of robot surface points with negative signed distance at `q`.
pub fn count_negative_points(
    grid: &SignedDistanceGrid,
    chain: &KinematicChain,
    pts: &SurfacePointSet,
    q: &JointConfig,
) -> Result<usize> {
    let world = robot_model::transform_points(chain, q, pts)?;
    Ok(world.iter().filter(|p| grid.query(p) < 0.0).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct CollisionReport {
    pub in_collision: bool,
    pub worst_config_negative_count: usize,
    pub worst_step: usize,
}

/// A trajectory collides when some configuration has at least
/// [`COLLISION_POINT_THRESHOLD`] negative surface points.
pub fn check_trajectory_collision(
    grid: &SignedDistanceGrid,
    chain: &KinematicChain,
    pts: &SurfacePointSet,
    traj: &TrajectoryPlan,
) -> Result<CollisionReport> {
    let mut worst = (0, 0);
    for t in 0..traj.steps() {
        let count = count_negative_points(grid, chain, pts, &traj.position(t))?;
        if count > worst.0 {
            worst = (count, t);
        }
    }
    Ok(CollisionReport {
        in_collision: worst.0 >= COLLISION_POINT_THRESHOLD,
        worst_config_negative_count: worst.0,
        worst_step: worst.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::RigidTransform;
    use crate::scene::{DepthImage, Intrinsics};
    use std::sync::Arc;

    #[test]
    fn penalty_values() {
        let eps = 0.02;
        assert_eq!(collision_penalty(0.05, eps), 0.0);
        assert!((collision_penalty(0.0, eps) - 0.01).abs() < 1e-12);
        assert!((collision_penalty(0.01, eps) - 0.0025).abs() < 1e-12);
        assert!((collision_penalty(-0.01, eps) - 0.02).abs() < 1e-12);
    }

    #[test]
    fn penalty_is_c1_at_branch_points() {
        let eps = 0.02;
        let h = 1e-9;
        for d in [0.0, eps] {
            let left = (collision_penalty(d, eps) - collision_penalty(d - h, eps)) / h;
            let right = (collision_penalty(d + h, eps) - collision_penalty(d, eps)) / h;
            assert!((left - right).abs() < 1e-6, "kink at {d}");
        }
        assert_eq!(collision_penalty_slope(-1e-12, eps), -1.0);
        assert!((collision_penalty_slope(0.0, eps) + 1.0).abs() < 1e-15);
        assert_eq!(collision_penalty_slope(eps, eps), 0.0);
    }

    #[test]
    fn single_point_magnitude() {
        let cloud = PointCloud::new(vec![Vector3::zeros()]).unwrap();
        let grid = build_sdf(&cloud, 0.1, 0.3).unwrap();
        assert!((grid.query(&Vector3::new(0.1, 0.0, 0.0)) - 0.1).abs() < 1e-12);
        assert_eq!(grid.query(&Vector3::zeros()), 0.0);
        assert_eq!(grid.query(&Vector3::new(5.0, 0.0, 0.0)), OUTSIDE_DISTANCE);
        assert!(grid.min_value() >= 0.0);
    }

    #[test]
    fn empty_cloud_is_rejected() {
        assert!(matches!(
            build_sdf(&PointCloud::default(), 0.05, 0.3),
            Err(Error::EmptyCloud)
        ));
    }

    fn forward_camera(depth: f64) -> Arc<DepthImage> {
        let (w, h) = (9, 9);
        let mut d = vec![0.0; w * h];
        d[4 * w + 4] = depth;
        Arc::new(
            DepthImage::new(
                w,
                h,
                d,
                Intrinsics {
                    fx: 10.0,
                    fy: 10.0,
                    cx: 4.0,
                    cy: 4.0,
                },
                RigidTransform::identity(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn vertices_behind_the_surface_are_negative() {
        let cloud = PointCloud::new(vec![Vector3::new(0.0, 0.0, 1.0)])
            .unwrap()
            .with_source(forward_camera(1.0));
        let grid = build_sdf(&cloud, 0.1, 0.3).unwrap();
        assert!((grid.query(&Vector3::new(0.0, 0.0, 1.1)) + 0.1).abs() < 1e-9);
        assert!((grid.query(&Vector3::new(0.0, 0.0, 0.9)) - 0.1).abs() < 1e-9);
    }

    #[test]
    fn gradient_points_away_from_the_cloud() {
        let cloud = PointCloud::new(vec![Vector3::zeros()]).unwrap();
        let grid = build_sdf(&cloud, 0.05, 0.3).unwrap();
        let g = grid.gradient(&Vector3::new(0.15, 0.0, 0.0));
        assert!((g - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-9);
        // At the border one side leaves the grid and the other side is used.
        let edge = grid.vertex(grid.dims[0] - 1, grid.dims[1] / 2, grid.dims[2] / 2);
        assert!(grid.gradient(&edge).x > 0.0);
    }
}
