#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use graspopt::cli::{self, Robot, RobotArgs};
use graspopt::scene::SignedDistanceGrid;
use graspopt::JointConfig;

pub const READY: [f64; 7] = [0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785];

pub fn urdf() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/arm7/arm7.urdf")
}

pub fn robot_args() -> RobotArgs {
    RobotArgs {
        urdf: urdf(),
        base_link: None,
        tool_link: None,
        points_per_link: graspopt::robot_model::DEFAULT_POINTS_PER_LINK,
        sample_seed: 0,
    }
}

pub fn robot() -> Robot {
    cli::load_robot(&robot_args()).unwrap()
}

pub fn ready() -> JointConfig {
    JointConfig::new(READY.to_vec())
}

/// Grid over the robot workspace filled by `f(vertex)`.
pub fn grid_from(f: impl Fn(&Vector3<f64>) -> f64) -> SignedDistanceGrid {
    let origin = Vector3::new(-1.2, -1.2, -0.4);
    let res = 0.05;
    let dims = [49, 49, 41];
    let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let v = origin + Vector3::new(i as f64, j as f64, k as f64) * res;
                values.push(f(&v));
            }
        }
    }
    SignedDistanceGrid::from_parts(origin, res, dims, values).unwrap()
}

/// All-positive field: nothing to collide with.
pub fn empty_scene() -> SignedDistanceGrid {
    grid_from(|_| 1.0)
}

/// Solid half-space `x > x_wall`.
pub fn wall(x_wall: f64) -> SignedDistanceGrid {
    grid_from(|v| x_wall - v.x)
}
