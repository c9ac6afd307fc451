//! Joint motion and grasp planning on point clouds.
//!
//! Robots are represented by points sampled from their link meshes and the
//! scene by a point cloud. Goal reaching becomes point matching between the
//! gripper point set at the current and the goal pose, and collision
//! avoidance becomes a lookup of robot points in a signed distance grid built
//! from the scene points. A constrained trajectory program over joint
//! positions and velocities is then solved with an augmented-Lagrangian
//! method.
//!
//! The crate is organised bottom-up:
//!
//! * [`kinematics`]: URDF subset parsing, forward kinematics and Jacobians.
//! * [`robot_model`]: surface point sampling and the gripper point set.
//! * [`scene`]: point clouds, depth back-projection and the signed distance grid.
//! * [`costs`]: goal, standoff, collision and velocity costs with gradients.
//! * [`solver`]: bound and linear-equality constrained NLP solver.
//! * [`ik`]: inverse kinematics with success classification.
//! * [`planner`]: goal filtering, initialization ranking and trajectory optimization.
//! * [`cli`]: the command surface used by the `graspopt` binary.

pub mod cli;
pub mod costs;
mod error;
pub mod ik;
pub mod kinematics;
pub mod mesh;
pub mod planner;
pub mod robot_model;
pub mod scene;
pub mod solver;

pub use error::{Error, Result};
pub use kinematics::{JointConfig, KinematicChain, RigidTransform};
