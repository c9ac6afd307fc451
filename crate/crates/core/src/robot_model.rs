//! Point-cloud representation of the robot.
//!
//! Every link carries up to `points_per_link` points picked from the vertices
//! of its mesh files by farthest-point sampling. The gripper point set used by
//! the goal cost defaults to the tool link's surface points.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::kinematics::{JointConfig, KinematicChain, LinkPoses};
use crate::{mesh, Error, Result};

pub const DEFAULT_POINTS_PER_LINK: usize = 100;

/// Per-link surface points in link-local frames, indexed like the chain's links.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePointSet {
    pub per_link: Vec<Vec<Vector3<f64>>>,
    pub points_per_link: usize,
}

impl SurfacePointSet {
    /// Total number of points `M`.
    pub fn len(&self) -> usize {
        self.per_link.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(link, local point)` pairs in the stable output order of
    /// [`transform_points`].
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Vector3<f64>)> {
        self.per_link
            .iter()
            .enumerate()
            .flat_map(|(l, pts)| pts.iter().map(move |p| (l, p)))
    }
}

/// Points `x_i` on the end effector, in the tool link frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GripperPointSet {
    pub points: Vec<Vector3<f64>>,
}

impl GripperPointSet {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::Invalid(format!(
                "gripper point set needs at least 3 points, got {}",
                points.len()
            )));
        }
        let p0 = points[0];
        let far = points
            .iter()
            .max_by(|a, b| (*a - p0).norm().total_cmp(&(*b - p0).norm()))
            .copied()
            .unwrap_or(p0);
        let dir = far - p0;
        let spread = points
            .iter()
            .map(|p| dir.cross(&(p - p0)).norm())
            .fold(0.0, f64::max);
        if dir.norm() < 1e-9 || spread < 1e-9 * dir.norm().max(1.0) {
            return Err(Error::Invalid("gripper points are collinear".into()));
        }
        Ok(Self { points })
    }

    /// The tool link's surface points.
    pub fn from_surface(chain: &KinematicChain, pts: &SurfacePointSet) -> Result<Self> {
        Self::new(pts.per_link[chain.tool_link].clone())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest distance of a gripper point from the tool frame origin.
    pub fn radius(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

/// Farthest-point sampling of `count` points. The candidate order is a
/// seeded shuffle, so the start point and ties depend on `seed` only.
pub fn farthest_point_sample(
    candidates: &[Vector3<f64>],
    count: usize,
    seed: u64,
) -> Vec<Vector3<f64>> {
    if candidates.len() <= count {
        return candidates.to_vec();
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pts: Vec<Vector3<f64>> = order.iter().map(|&i| candidates[i]).collect();

    let mut chosen = Vec::with_capacity(count);
    let mut dist = vec![f64::INFINITY; pts.len()];
    let mut next = 0;
    for _ in 0..count {
        chosen.push(pts[next]);
        let last = pts[next];
        let mut best = 0;
        let mut best_d = -1.0;
        for (i, p) in pts.iter().enumerate() {
            let d = (p - last).norm_squared();
            if d < dist[i] {
                dist[i] = d;
            }
            if dist[i] > best_d {
                best_d = dist[i];
                best = i;
            }
        }
        next = best;
    }
    chosen
}

/// Samples surface points for every link. Links without meshes get none.
pub fn sample_surface_points(
    chain: &KinematicChain,
    points_per_link: usize,
    seed: u64,
) -> Result<SurfacePointSet> {
    let mut per_link = Vec::with_capacity(chain.links.len());
    for (li, link) in chain.links.iter().enumerate() {
        let mut verts = Vec::new();
        for mesh_ref in &link.meshes {
            let raw = mesh::load_vertices(&mesh_ref.path)?;
            verts.extend(raw.iter().map(|v| {
                mesh_ref
                    .origin
                    .transform_point(&v.component_mul(&mesh_ref.scale))
            }));
        }
        per_link.push(farthest_point_sample(
            &verts,
            points_per_link,
            seed.wrapping_add(li as u64),
        ));
    }
    Ok(SurfacePointSet {
        per_link,
        points_per_link,
    })
}

/// World-frame positions of all surface points at `q`, ordered link by link.
pub fn transform_points(
    chain: &KinematicChain,
    q: &JointConfig,
    pts: &SurfacePointSet,
) -> Result<Vec<Vector3<f64>>> {
    let fk = chain.forward_kinematics(q)?;
    Ok(transform_with(&fk, pts))
}

pub(crate) fn transform_with(fk: &LinkPoses, pts: &SurfacePointSet) -> Vec<Vector3<f64>> {
    pts.iter()
        .map(|(l, p)| fk.poses[l].transform_point(p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> Vec<Vector3<f64>> {
        let mut v = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    v.push(Vector3::new(x, y, z));
                }
            }
        }
        v
    }

    #[test]
    fn fps_never_exceeds_vertex_count() {
        assert_eq!(farthest_point_sample(&cube(), 100, 1).len(), 8);
    }

    #[test]
    fn fps_is_seed_deterministic_and_spreads() {
        let grid: Vec<_> = (0..20)
            .flat_map(|i| (0..20).map(move |j| Vector3::new(i as f64, j as f64, 0.0)))
            .collect();
        let a = farthest_point_sample(&grid, 4, 7);
        let b = farthest_point_sample(&grid, 4, 7);
        assert_eq!(a, b);
        // Four FPS picks on a square always include opposite corners.
        let span = a
            .iter()
            .flat_map(|p| a.iter().map(move |q| (p - q).norm()))
            .fold(0.0, f64::max);
        assert!((span - (2.0f64 * 19.0 * 19.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gripper_rejects_degenerate_sets() {
        assert!(GripperPointSet::new(vec![Vector3::zeros(), Vector3::x()]).is_err());
        let line = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(GripperPointSet::new(line).is_err());
        assert!(GripperPointSet::new(vec![Vector3::zeros(), Vector3::x(), Vector3::y()]).is_ok());
    }
}
