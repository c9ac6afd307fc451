//! Scalar cost terms and their gradients with respect to joint variables.
//!
//! Gradients are assembled from per-link wrenches: every point sensitivity
//! `f` applied at world point `p` contributes `f` to the link force and
//! `p × f` to the link moment, and the chain maps the pair to joint space.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::{euler_xyz, skew};
use crate::kinematics::{JointConfig, KinematicChain, LinkPoses, RigidTransform};
use crate::planner::TrajectoryPlan;
use crate::robot_model::{GripperPointSet, SurfacePointSet};
use crate::scene::{collision_penalty, collision_penalty_slope, SignedDistanceGrid};
use crate::{Error, Result};

/// Tolerance on rotation orthonormality when reading goal poses.
pub const POSE_TOLERANCE: f64 = 1e-6;

/// Candidate gripper poses in the robot base frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSet {
    pub goals: Vec<RigidTransform>,
}

#[derive(Serialize, Deserialize)]
struct GoalRecord {
    pose: Vec<f64>,
}

impl GoalSet {
    pub fn new(goals: Vec<RigidTransform>) -> Result<Self> {
        if goals.is_empty() {
            return Err(Error::Invalid("goal set is empty".into()));
        }
        if let Some(i) = goals.iter().position(|g| !g.is_rigid(POSE_TOLERANCE)) {
            return Err(Error::Invalid(format!("goal {i} is not a rigid transform")));
        }
        Ok(Self { goals })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(goal_poses_from_json(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::new(read_goal_poses(path)?)
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn to_json(&self) -> String {
        goal_poses_to_json(&self.goals)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Parses a JSON array of `{"pose": [16 row-major values]}` records. Accepts
/// an empty array; rotations are checked and re-orthonormalized.
pub fn goal_poses_from_json(text: &str) -> Result<Vec<RigidTransform>> {
    let records: Vec<GoalRecord> =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("goal set: {e}")))?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let t = RigidTransform::from_row_major(&r.pose)
                .map_err(|e| Error::Parse(format!("goal {i}: {e}")))?;
            let last = &r.pose[12..];
            if last.iter().zip([0.0, 0.0, 0.0, 1.0]).any(|(a, b)| (a - b).abs() > POSE_TOLERANCE) {
                return Err(Error::Parse(format!("goal {i}: last row must be 0 0 0 1")));
            }
            if !t.is_rigid(POSE_TOLERANCE) {
                return Err(Error::Parse(format!("goal {i}: rotation is not orthonormal")));
            }
            Ok(t.orthonormalized())
        })
        .collect()
}

pub fn read_goal_poses(path: &Path) -> Result<Vec<RigidTransform>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    goal_poses_from_json(&text)
}

pub fn goal_poses_to_json(goals: &[RigidTransform]) -> String {
    let records: Vec<GoalRecord> = goals
        .iter()
        .map(|g| GoalRecord {
            pose: g.to_row_major().to_vec(),
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("goal records serialize")
}

/// Pre-grasp displacement along the gripper approach axis, targeted
/// `delta_steps` steps before the end of the trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandoffSpec {
    pub offset: f64,
    pub delta_steps: usize,
    /// Approach axis in the tool frame.
    pub approach_axis: Vector3<f64>,
}

impl StandoffSpec {
    pub fn new(offset: f64, delta_steps: usize, steps: usize) -> Result<Self> {
        if !(offset > 0.0 && offset.is_finite()) {
            return Err(Error::Invalid(format!("standoff offset must be positive, got {offset}")));
        }
        if delta_steps == 0 || delta_steps >= steps {
            return Err(Error::Invalid(format!(
                "standoff steps must lie in (0, {steps}), got {delta_steps}"
            )));
        }
        Ok(Self {
            offset,
            delta_steps,
            approach_axis: Vector3::z(),
        })
    }

    /// `T_Δ`: a translation of `-offset` along the approach axis.
    pub fn displacement(&self) -> RigidTransform {
        RigidTransform::from_translation(-self.offset * self.approach_axis.normalize())
    }

    /// Standoff pose `T_g · T_Δ`.
    pub fn pose(&self, goal: &RigidTransform) -> RigidTransform {
        goal * &self.displacement()
    }
}

/// Goal-reaching cost variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    PointMatching,
    Quaternion,
    Euler,
}

impl CostKind {
    pub const ALL: [CostKind; 3] = [CostKind::PointMatching, CostKind::Quaternion, CostKind::Euler];

    pub fn name(self) -> &'static str {
        match self {
            CostKind::PointMatching => "point_matching",
            CostKind::Quaternion => "quaternion",
            CostKind::Euler => "euler",
        }
    }
}

impl std::str::FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pm" | "point_matching" => Ok(CostKind::PointMatching),
            "quat" | "quaternion" => Ok(CostKind::Quaternion),
            "euler" => Ok(CostKind::Euler),
            _ => Err(Error::Invalid(format!("unknown cost kind `{s}`"))),
        }
    }
}

/// Point-matching cost `Σ ‖T x_i − T_g x_i‖²`.
pub fn goal_cost(pose: &RigidTransform, goal: &RigidTransform, gripper: &GripperPointSet) -> f64 {
    gripper
        .points
        .iter()
        .map(|x| (pose.transform_point(x) - goal.transform_point(x)).norm_squared())
        .sum()
}

/// `‖Δt‖² + 1 − (q̃_T · q̃_g)²`.
pub fn goal_cost_quaternion(pose: &RigidTransform, goal: &RigidTransform) -> f64 {
    let s = pose.quaternion().coords.dot(&goal.quaternion().coords);
    (pose.translation - goal.translation).norm_squared() + 1.0 - s * s
}

/// `‖Δt‖² + ‖e_T − e_g‖²` with intrinsic XYZ Euler angles.
pub fn goal_cost_euler(pose: &RigidTransform, goal: &RigidTransform) -> f64 {
    (pose.translation - goal.translation).norm_squared()
        + (pose.euler_xyz() - goal.euler_xyz()).norm_squared()
}

pub fn pose_cost(
    kind: CostKind,
    pose: &RigidTransform,
    goal: &RigidTransform,
    gripper: &GripperPointSet,
) -> f64 {
    match kind {
        CostKind::PointMatching => goal_cost(pose, goal, gripper),
        CostKind::Quaternion => goal_cost_quaternion(pose, goal),
        CostKind::Euler => goal_cost_euler(pose, goal),
    }
}

/// Value of a goal cost at the tool pose in `fk`; adds its joint gradient
/// to `grad`.
pub(crate) fn pose_cost_fk(
    kind: CostKind,
    chain: &KinematicChain,
    fk: &LinkPoses,
    goal: &RigidTransform,
    gripper: &GripperPointSet,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let pose = &fk.poses[chain.tool_link];
    let mut force = Vector3::zeros();
    let mut moment = Vector3::zeros();
    let value = match kind {
        CostKind::PointMatching => {
            let mut value = 0.0;
            for x in &gripper.points {
                let p = pose.transform_point(x);
                let e = p - goal.transform_point(x);
                value += e.norm_squared();
                let f = 2.0 * e;
                force += f;
                moment += p.cross(&f);
            }
            value
        }
        CostKind::Quaternion => {
            let dt = pose.translation - goal.translation;
            let (qt, qg) = (pose.quaternion(), goal.quaternion());
            let s = qt.coords.dot(&qg.coords);
            let (w, v) = (qt.scalar(), qt.imag());
            let (gw, gv) = (qg.scalar(), qg.imag());
            let f = 2.0 * dt;
            force += f;
            moment += pose.translation.cross(&f);
            // d(q̃_T·q̃_g)/dω = ½ (w g_v − g_w v + v × g_v) for q̇ = ½ ω ⊗ q.
            moment += -s * (w * gv - gw * v + v.cross(&gv));
            dt.norm_squared() + 1.0 - s * s
        }
        CostKind::Euler => {
            let dt = pose.translation - goal.translation;
            let de = euler_xyz(&pose.rotation) - euler_xyz(&goal.rotation);
            let f = 2.0 * dt;
            force += f;
            moment += pose.translation.cross(&f);
            let r = &pose.rotation;
            for k in 0..3 {
                let dr = skew(&Vector3::ith(k, 1.0)) * r;
                moment[k] += 2.0 * de.dot(&euler_xyz_differential(r, &dr));
            }
            dt.norm_squared() + de.norm_squared()
        }
    };
    chain.accumulate_wrench(fk, chain.tool_link, &(scale * force), &(scale * moment), grad);
    scale * value
}

/// Directional derivative of [`euler_xyz`] at `r` along `dr`. Components
/// whose branch is singular (gimbal lock) are reported as zero.
fn euler_xyz_differential(
    r: &nalgebra::Matrix3<f64>,
    dr: &nalgebra::Matrix3<f64>,
) -> Vector3<f64> {
    const SINGULAR: f64 = 1e-12;
    let na = r[(1, 2)].powi(2) + r[(2, 2)].powi(2);
    let da = if na > SINGULAR {
        (r[(1, 2)] * dr[(2, 2)] - r[(2, 2)] * dr[(1, 2)]) / na
    } else {
        0.0
    };
    let cb2 = 1.0 - r[(0, 2)].powi(2);
    let db = if cb2 > SINGULAR {
        dr[(0, 2)] / cb2.sqrt()
    } else {
        0.0
    };
    let nc = r[(0, 1)].powi(2) + r[(0, 0)].powi(2);
    let dc = if nc > SINGULAR {
        (r[(0, 1)] * dr[(0, 0)] - r[(0, 0)] * dr[(0, 1)]) / nc
    } else {
        0.0
    };
    Vector3::new(da, db, dc)
}

/// Goal cost of any kind at `q` together with its joint gradient.
pub fn goal_cost_with_gradient(
    kind: CostKind,
    chain: &KinematicChain,
    q: &JointConfig,
    goal: &RigidTransform,
    gripper: &GripperPointSet,
) -> Result<(f64, DVector<f64>)> {
    let fk = chain.forward_kinematics(q)?;
    let mut grad = DVector::zeros(chain.dof());
    let value = pose_cost_fk(kind, chain, &fk, goal, gripper, 1.0, grad.as_mut_slice());
    Ok((value, grad))
}

/// Joint gradient of the point-matching cost at `q`.
pub fn goal_cost_gradient(
    chain: &KinematicChain,
    q: &JointConfig,
    goal: &RigidTransform,
    gripper: &GripperPointSet,
) -> Result<DVector<f64>> {
    Ok(goal_cost_with_gradient(CostKind::PointMatching, chain, q, goal, gripper)?.1)
}

/// Summed collision penalty of all robot surface points posed by `fk`. With
/// `grad`, adds `scale` times the gradient obtained by treating the grid as
/// locally linear with its finite-difference gradient.
pub(crate) fn collision_cost_fk(
    grid: &SignedDistanceGrid,
    chain: &KinematicChain,
    pts: &SurfacePointSet,
    fk: &LinkPoses,
    eps: f64,
    scale: f64,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let mut total = 0.0;
    for (link, local) in pts.per_link.iter().enumerate() {
        if local.is_empty() {
            continue;
        }
        let pose = &fk.poses[link];
        let mut force = Vector3::zeros();
        let mut moment = Vector3::zeros();
        for x in local {
            let p = pose.transform_point(x);
            let d = grid.query(&p);
            total += collision_penalty(d, eps);
            if grad.is_some() {
                let slope = collision_penalty_slope(d, eps);
                if slope != 0.0 {
                    let f = slope * grid.gradient(&p);
                    force += f;
                    moment += p.cross(&f);
                }
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            if force != Vector3::zeros() {
                chain.accumulate_wrench(fk, link, &(scale * force), &(scale * moment), g);
            }
        }
    }
    total
}

/// `Σ_i c(d(x_i(q)))` over all robot surface points.
pub fn config_collision_cost(
    grid: &SignedDistanceGrid,
    chain: &KinematicChain,
    pts: &SurfacePointSet,
    q: &JointConfig,
    eps: f64,
) -> Result<f64> {
    let fk = chain.forward_kinematics(q)?;
    Ok(collision_cost_fk(grid, chain, pts, &fk, eps, 1.0, None))
}

pub fn config_collision_cost_with_gradient(
    grid: &SignedDistanceGrid,
    chain: &KinematicChain,
    pts: &SurfacePointSet,
    q: &JointConfig,
    eps: f64,
) -> Result<(f64, DVector<f64>)> {
    let fk = chain.forward_kinematics(q)?;
    let mut grad = DVector::zeros(chain.dof());
    let value = collision_cost_fk(grid, chain, pts, &fk, eps, 1.0, Some(grad.as_mut_slice()));
    Ok((value, grad))
}

/// `Σ_t ‖q̇_t‖²`.
pub fn velocity_cost(traj: &TrajectoryPlan) -> f64 {
    traj.velocities.norm_squared()
}

pub fn velocity_cost_gradient(traj: &TrajectoryPlan) -> DMatrix<f64> {
    2.0 * &traj.velocities
}
