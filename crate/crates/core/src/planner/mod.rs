//! Goal filtering, initialization ranking and trajectory optimization.
//!
//! Planning runs in four stages: drop goals whose gripper points collide with
//! the scene, drop goals without an IK solution, rank the survivors by the
//! collision cost of a straight joint-space interpolation, and solve the
//! fixed-goal trajectory program for the best `top_n_goals` of them. The
//! lowest final objective wins.

mod nlp;
mod trajectory;

use std::time::Instant;

use log::{debug, info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{config_collision_cost, CostKind};
use crate::ik::{self, pose_errors};
use crate::kinematics::{JointConfig, KinematicChain, RigidTransform};
use crate::robot_model::{GripperPointSet, SurfacePointSet};
use crate::scene::{check_trajectory_collision, CollisionReport, SignedDistanceGrid, COLLISION_POINT_THRESHOLD};
use crate::solver::{self, SolveOptions, SolveReport};
use crate::{Error, Result};

pub use nlp::{flatten, ObjectiveBreakdown, TrajectoryObjective, POSITION_PENALTY};
pub use trajectory::{ConstraintReport, TrajectoryPlan};

/// Collision costs closer than this rank as equal.
pub const RANK_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Number of trajectory steps `T`.
    #[serde(rename = "T")]
    pub steps: usize,
    /// Trajectory duration in seconds; `dt = horizon / T`.
    pub horizon: f64,
    /// Collision weight.
    pub lambda1: f64,
    /// Velocity weight.
    pub lambda2: f64,
    /// Steps between the standoff pose and the final pose.
    pub delta: usize,
    /// Collision margin in meters.
    pub eps: f64,
    pub standoff_offset: f64,
    pub top_n_goals: usize,
    /// Optimize velocities only, with positions integrated from `q0`.
    pub reduced: bool,
    pub max_outer: usize,
    pub max_inner: usize,
    pub eq_tol: f64,
    pub grad_tol: f64,
    /// Seed of the random IK restart.
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        let s = SolveOptions::default();
        Self {
            steps: 50,
            horizon: 10.0,
            lambda1: 10.0,
            lambda2: 0.01,
            delta: 10,
            eps: 0.02,
            standoff_offset: 0.10,
            top_n_goals: 3,
            reduced: false,
            max_outer: s.max_outer,
            max_inner: s.max_inner,
            eq_tol: s.eq_tol,
            grad_tol: s.grad_tol,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Row of the standoff configuration, `δ` steps before the last row.
    pub fn standoff_index(&self) -> usize {
        self.steps - 1 - self.delta
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            eq_tol: self.eq_tol,
            grad_tol: self.grad_tol,
            ..SolveOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.steps < 3 {
            return bad(format!("T must be at least 3, got {}", self.steps));
        }
        if self.delta == 0 || self.delta >= self.steps {
            return bad(format!("delta must lie in (0, T), got {}", self.delta));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.standoff_offset > 0.0) {
            return bad(format!("standoff_offset must be positive, got {}", self.standoff_offset));
        }
        if self.top_n_goals == 0 {
            return bad("top_n_goals must be at least 1".into());
        }
        Ok(())
    }
}

/// Indices of goals at which fewer than [`COLLISION_POINT_THRESHOLD`]
/// gripper points have negative signed distance.
pub fn filter_goals_collision(
    grid: &SignedDistanceGrid,
    gripper: &GripperPointSet,
    goals: &[RigidTransform],
) -> Vec<usize> {
    goals
        .iter()
        .enumerate()
        .filter(|(_, g)| {
            let negative = gripper
                .points
                .iter()
                .filter(|x| grid.query(&g.transform_point(x)) < 0.0)
                .count();
            negative < COLLISION_POINT_THRESHOLD
        })
        .map(|(i, _)| i)
        .collect()
}

/// Goals among `indices` with a successful point-matching IK solution,
/// paired with that solution.
pub fn filter_goals_ik(
    chain: &KinematicChain,
    gripper: &GripperPointSet,
    goals: &[RigidTransform],
    indices: &[usize],
    q0: &JointConfig,
    seed: u64,
) -> Result<Vec<(usize, JointConfig)>> {
    let subset: Vec<RigidTransform> = indices.iter().map(|&i| goals[i]).collect();
    let restarts = ik::default_restarts(chain, q0, seed);
    let results = ik::batch_ik(chain, gripper, &subset, &restarts, CostKind::PointMatching)?;
    Ok(indices
        .iter()
        .zip(results)
        .filter(|(_, r)| r.success)
        .map(|(&i, r)| (i, r.q_star))
        .collect())
}

/// Straight joint-space trajectory: `q_0 = q_1 = q0`, then uniform motion to
/// `q_goal` at the last step, where the velocity returns to zero.
pub fn initial_trajectory(q0: &JointConfig, q_goal: &JointConfig, config: &PlannerConfig) -> TrajectoryPlan {
    let n = q0.len();
    let steps = config.steps;
    let dt = config.dt();
    let span = (steps - 2) as f64;
    let positions = DMatrix::from_fn(steps, n, |t, j| {
        if t == 0 {
            q0.0[j]
        } else {
            let s = (t - 1) as f64 / span;
            q0.0[j] + s * (q_goal.0[j] - q0.0[j])
        }
    });
    let mut velocities = DMatrix::zeros(steps, n);
    for t in 0..steps - 1 {
        for j in 0..n {
            velocities[(t, j)] = (positions[(t + 1, j)] - positions[(t, j)]) / dt;
        }
    }
    // The uniform velocity reproduces the increments only up to rounding.
    let mut plan = TrajectoryPlan {
        positions,
        velocities,
        dt,
        selected_goal_index: 0,
        standoff_index: config.standoff_index(),
    };
    for t in 1..steps {
        for j in 0..n {
            plan.positions[(t, j)] = plan.positions[(t - 1, j)] + dt * plan.velocities[(t - 1, j)];
        }
    }
    plan
}

/// Orders candidates by the summed collision cost of their initial
/// trajectory; near-equal costs fall back to the joint distance from `q0`.
pub fn rank_initializations(
    grid: &SignedDistanceGrid,
    chain: &KinematicChain,
    pts: &SurfacePointSet,
    q0: &JointConfig,
    candidates: &[(usize, JointConfig)],
    config: &PlannerConfig,
) -> Result<Vec<(usize, JointConfig)>> {
    let mut scored: Vec<(f64, f64, usize)> = candidates
        .par_iter()
        .enumerate()
        .map(|(k, (_, q_ik))| {
            let traj = initial_trajectory(q0, q_ik, config);
            let mut cost = 0.0;
            for t in 0..traj.steps() {
                cost += config_collision_cost(grid, chain, pts, &traj.position(t), config.eps)?;
            }
            Ok((cost, (&q_ik.0 - &q0.0).norm(), k))
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
    // Runs of near-equal cost are re-sorted by distance.
    let mut start = 0;
    while start < scored.len() {
        let mut end = start + 1;
        while end < scored.len() && scored[end].0 - scored[start].0 < RANK_TIE_TOLERANCE {
            end += 1;
        }
        scored[start..end].sort_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)));
        start = end;
    }
    Ok(scored.into_iter().map(|(_, _, k)| candidates[k].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoalSolveSummary {
    pub goal_index: usize,
    pub objective: f64,
    pub initial_objective: f64,
    pub converged: bool,
    pub max_equality_residual: f64,
    pub projected_gradient_norm: f64,
    pub iterations: usize,
    pub wall_time: f64,
    /// The solve did not improve on the initialization, which was kept.
    pub kept_initialization: bool,
    /// Positions were re-integrated from the solved velocities to meet the
    /// dynamics tolerance.
    pub restored: bool,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub plan: TrajectoryPlan,
    /// Solver report of the selected goal.
    pub report: SolveReport,
    pub breakdown: ObjectiveBreakdown,
    pub per_goal: Vec<GoalSolveSummary>,
    pub q0: JointConfig,
    pub goals_after_collision_filter: usize,
    pub goals_after_ik_filter: usize,
    pub wall_time: f64,
}

impl PlanOutcome {
    pub fn converged(&self) -> bool {
        self.per_goal
            .iter()
            .find(|g| g.goal_index == self.plan.selected_goal_index)
            .is_some_and(|g| g.converged)
    }
}

struct Candidate {
    plan: TrajectoryPlan,
    report: SolveReport,
    breakdown: ObjectiveBreakdown,
    summary: GoalSolveSummary,
}

#[allow(clippy::too_many_arguments)]
fn solve_for_goal(
    chain: &KinematicChain,
    pts: &SurfacePointSet,
    gripper: &GripperPointSet,
    grid: &SignedDistanceGrid,
    q0: &JointConfig,
    goal_index: usize,
    goal: RigidTransform,
    q_ik: &JointConfig,
    config: &PlannerConfig,
) -> Result<Candidate> {
    let objective = TrajectoryObjective::new(chain, pts, gripper, grid, goal, q0.clone(), config)?;
    let mut init = initial_trajectory(q0, q_ik, config);
    init.selected_goal_index = goal_index;
    let init_feasible = init.check_constraints(chain, q0).satisfied(config.eq_tol);
    let init_breakdown = objective.evaluate_plan(&init);

    let opts = config.solve_options();
    let (report, mut plan) = if config.reduced {
        let problem = objective.reduced_problem(&init);
        let report = solver::solve(&problem, &opts)?;
        let plan = objective.plan_from_reduced(&report.x_star, goal_index);
        (report, plan)
    } else {
        let problem = objective.full_problem(&init);
        let report = solver::solve(&problem, &opts)?;
        let plan = objective.plan_from_full(&report.x_star, goal_index);
        (report, plan)
    };
    let mut solved_feasible = plan.check_constraints(chain, q0).satisfied(config.eq_tol);
    let mut restored = false;
    if !solved_feasible {
        let (_, v) = flatten(&plan);
        let integrated = objective.plan_from_reduced(&v, goal_index);
        if integrated.check_constraints(chain, q0).satisfied(config.eq_tol) {
            debug!("goal {goal_index}: positions re-integrated from velocities");
            plan = integrated;
            solved_feasible = true;
            restored = true;
        }
    }
    let mut breakdown = objective.evaluate_plan(&plan);
    let keep_init = init_feasible && (!solved_feasible || init_breakdown.total < breakdown.total);
    if keep_init {
        plan = init;
        breakdown = init_breakdown;
    }
    Ok(Candidate {
        summary: GoalSolveSummary {
            goal_index,
            objective: breakdown.total,
            initial_objective: init_breakdown.total,
            converged: report.converged && !keep_init,
            max_equality_residual: plan.max_dynamics_residual(),
            projected_gradient_norm: report.projected_gradient_norm,
            iterations: report.iterations,
            wall_time: report.wall_time,
            kept_initialization: keep_init,
            restored,
        },
        plan,
        report,
        breakdown,
    })
}

/// Plans a grasp trajectory from `q0` to the best reachable goal.
#[allow(clippy::too_many_arguments)]
pub fn plan(
    chain: &KinematicChain,
    pts: &SurfacePointSet,
    gripper: &GripperPointSet,
    grid: &SignedDistanceGrid,
    q0: &JointConfig,
    goals: &[RigidTransform],
    config: &PlannerConfig,
) -> Result<PlanOutcome> {
    let start = Instant::now();
    config.validate()?;
    chain.forward_kinematics(q0)?;
    let q0 = if chain.within_limits(q0) {
        q0.clone()
    } else {
        warn!("start configuration is outside the joint limits; clamping");
        chain.clamp_to_limits(q0)
    };

    let free = filter_goals_collision(grid, gripper, goals);
    info!("{} of {} goals are collision-free", free.len(), goals.len());
    if free.is_empty() {
        return Err(Error::NoFeasibleGoal("every goal collides with the scene".into()));
    }
    let reachable = filter_goals_ik(chain, gripper, goals, &free, &q0, config.seed)?;
    info!("{} goals have IK solutions", reachable.len());
    if reachable.is_empty() {
        return Err(Error::NoFeasibleGoal("no collision-free goal has an IK solution".into()));
    }
    let ranked = rank_initializations(grid, chain, pts, &q0, &reachable, config)?;
    let chosen = &ranked[..ranked.len().min(config.top_n_goals)];

    let candidates: Vec<Candidate> = chosen
        .par_iter()
        .map(|(gi, q_ik)| solve_for_goal(chain, pts, gripper, grid, &q0, *gi, goals[*gi], q_ik, config))
        .collect::<Result<_>>()?;
    for c in &candidates {
        info!(
            "goal {}: objective {:.6} (initial {:.6}), residual {:.2e}, {} iterations",
            c.summary.goal_index,
            c.summary.objective,
            c.summary.initial_objective,
            c.summary.max_equality_residual,
            c.summary.iterations
        );
    }
    let per_goal: Vec<GoalSolveSummary> = candidates.iter().map(|c| c.summary.clone()).collect();
    let best = candidates
        .into_iter()
        .min_by(|a, b| a.breakdown.total.total_cmp(&b.breakdown.total))
        .expect("at least one candidate");

    Ok(PlanOutcome {
        plan: best.plan,
        report: best.report,
        breakdown: best.breakdown,
        per_goal,
        q0,
        goals_after_collision_filter: free.len(),
        goals_after_ik_filter: reachable.len(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Geometric quality of a plan against its selected goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanQuality {
    pub final_translation_error: f64,
    pub final_rotation_error: f64,
    pub reaches_goal: bool,
    /// Distance between the tool position at the standoff step and the
    /// standoff pose position.
    pub standoff_error: f64,
    pub collision: CollisionReport,
}

pub fn evaluate_plan_quality(
    chain: &KinematicChain,
    pts: &SurfacePointSet,
    grid: &SignedDistanceGrid,
    plan: &TrajectoryPlan,
    goal: &RigidTransform,
    standoff_offset: f64,
) -> Result<PlanQuality> {
    let final_pose = chain.tool_pose(&plan.final_position())?;
    let (t, r, ok) = pose_errors(&final_pose, goal);
    let standoff_pose = goal * &RigidTransform::from_translation(-standoff_offset * nalgebra::Vector3::z());
    let at_standoff = chain.tool_pose(&plan.position(plan.standoff_index))?;
    Ok(PlanQuality {
        final_translation_error: t,
        final_rotation_error: r,
        reaches_goal: ok,
        standoff_error: (at_standoff.translation - standoff_pose.translation).norm(),
        collision: check_trajectory_collision(grid, chain, pts, plan)?,
    })
}
