//! The fixed-goal trajectory program.
//!
//! Full formulation: `x = [q_0 … q_{T−1}, q̇_0 … q̇_{T−1}]` (row-major per
//! step) with `q_{t+1} − q_t − q̇_t·dt = 0` as linear equalities and the start
//! configuration and rest conditions imposed as fixed bounds.
//!
//! Reduced formulation: `x = [q̇_0 … q̇_{T−1}]` with positions integrated from
//! `q_0`; position limits become a quadratic penalty.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::{PlannerConfig, TrajectoryPlan};
use crate::costs::{collision_cost_fk, pose_cost_fk, CostKind, StandoffSpec};
use crate::kinematics::{JointConfig, KinematicChain, RigidTransform};
use crate::robot_model::{GripperPointSet, SurfacePointSet};
use crate::scene::SignedDistanceGrid;
use crate::solver::{LinearEquality, NlpProblem};

const PM: CostKind = CostKind::PointMatching;

/// Weight of the squared position-limit violation in the reduced formulation.
pub const POSITION_PENALTY: f64 = 1e4;

/// Objective terms of one trajectory; `collision` and `velocity` are the raw
/// sums before weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveBreakdown {
    pub goal: f64,
    pub standoff: f64,
    pub collision: f64,
    pub velocity: f64,
    pub total: f64,
}

pub struct TrajectoryObjective<'a> {
    pub chain: &'a KinematicChain,
    pub pts: &'a SurfacePointSet,
    pub gripper: &'a GripperPointSet,
    pub grid: &'a SignedDistanceGrid,
    pub goal: RigidTransform,
    pub standoff_pose: RigidTransform,
    pub q0: JointConfig,
    pub steps: usize,
    pub dt: f64,
    pub standoff_index: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub eps: f64,
}

impl<'a> TrajectoryObjective<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        chain: &'a KinematicChain,
        pts: &'a SurfacePointSet,
        gripper: &'a GripperPointSet,
        grid: &'a SignedDistanceGrid,
        goal: RigidTransform,
        q0: JointConfig,
        config: &PlannerConfig,
    ) -> crate::Result<Self> {
        config.validate()?;
        let standoff = StandoffSpec::new(config.standoff_offset, config.delta, config.steps)?;
        Ok(Self {
            chain,
            pts,
            gripper,
            grid,
            standoff_pose: standoff.pose(&goal),
            goal,
            q0,
            steps: config.steps,
            dt: config.dt(),
            standoff_index: config.standoff_index(),
            lambda1: config.lambda1,
            lambda2: config.lambda2,
            eps: config.eps,
        })
    }

    pub fn dof(&self) -> usize {
        self.chain.dof()
    }

    /// Objective terms at row-major `positions` and `velocities` (`T·n` each).
    /// Gradient buffers, when given, are overwritten.
    pub fn evaluate(
        &self,
        positions: &[f64],
        velocities: &[f64],
        grads: Option<(&mut [f64], &mut [f64])>,
    ) -> ObjectiveBreakdown {
        let n = self.dof();
        let last = self.steps - 1;
        let chain = self.chain;
        let step_cost = |t: usize, g: Option<&mut [f64]>| -> (f64, f64, f64) {
            let fk = chain.fk_unchecked(&positions[t * n..(t + 1) * n]);
            let want_grad = g.is_some();
            let mut scratch = Vec::new();
            let g: &mut [f64] = match g {
                Some(g) => g,
                None => {
                    scratch.resize(n, 0.0);
                    &mut scratch
                }
            };
            g.fill(0.0);
            let collision = collision_cost_fk(
                self.grid,
                chain,
                self.pts,
                &fk,
                self.eps,
                self.lambda1,
                want_grad.then_some(&mut *g),
            );
            let mut goal = 0.0;
            let mut standoff = 0.0;
            if t == last {
                goal = pose_cost_fk(PM, chain, &fk, &self.goal, self.gripper, 1.0, g);
            }
            if t == self.standoff_index {
                standoff = pose_cost_fk(PM, chain, &fk, &self.standoff_pose, self.gripper, 1.0, g);
            }
            (collision, goal, standoff)
        };

        let per_step: Vec<(f64, f64, f64)> = match grads {
            Some((gp, gv)) => {
                for (g, v) in gv.iter_mut().zip(velocities) {
                    *g = 2.0 * self.lambda2 * v;
                }
                gp.par_chunks_mut(n)
                    .enumerate()
                    .map(|(t, g)| step_cost(t, Some(g)))
                    .collect()
            }
            None => (0..self.steps)
                .into_par_iter()
                .map(|t| step_cost(t, None))
                .collect(),
        };
        let (mut collision, mut goal, mut standoff) = (0.0, 0.0, 0.0);
        for (c, g, s) in per_step {
            collision += c;
            goal += g;
            standoff += s;
        }
        let velocity: f64 = velocities.iter().map(|v| v * v).sum();
        ObjectiveBreakdown {
            goal,
            standoff,
            collision,
            velocity,
            total: goal + standoff + self.lambda1 * collision + self.lambda2 * velocity,
        }
    }

    pub fn evaluate_plan(&self, plan: &TrajectoryPlan) -> ObjectiveBreakdown {
        let (p, v) = flatten(plan);
        self.evaluate(&p, &v, None)
    }

    /// Position and velocity bounds with the start and rest conditions fixed.
    fn full_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dof();
        let (ql, qu) = (self.chain.lower_limits(), self.chain.upper_limits());
        let vmax = self.chain.velocity_limits();
        let tn = self.steps * n;
        let mut lo = vec![0.0; 2 * tn];
        let mut hi = vec![0.0; 2 * tn];
        for t in 0..self.steps {
            for j in 0..n {
                let (pi, vi) = (t * n + j, tn + t * n + j);
                if t == 0 {
                    lo[pi] = self.q0.0[j];
                    hi[pi] = self.q0.0[j];
                } else {
                    lo[pi] = ql[j];
                    hi[pi] = qu[j];
                }
                if t == 0 || t == self.steps - 1 {
                    lo[vi] = 0.0;
                    hi[vi] = 0.0;
                } else {
                    lo[vi] = -vmax[j];
                    hi[vi] = vmax[j];
                }
            }
        }
        (lo, hi)
    }

    fn dynamics_rows(&self) -> Vec<LinearEquality> {
        let n = self.dof();
        let tn = self.steps * n;
        let mut rows = Vec::with_capacity((self.steps - 1) * n);
        for t in 0..self.steps - 1 {
            for j in 0..n {
                rows.push(LinearEquality::new(
                    vec![
                        ((t + 1) * n + j, 1.0),
                        (t * n + j, -1.0),
                        (tn + t * n + j, -self.dt),
                    ],
                    0.0,
                ));
            }
        }
        rows
    }

    pub fn full_problem(&self, init: &TrajectoryPlan) -> NlpProblem<'_> {
        let tn = self.steps * self.dof();
        let (p, v) = flatten(init);
        let x0 = [p, v].concat();
        let objective = move |x: &[f64], g: &mut [f64]| {
            let (xp, xv) = x.split_at(tn);
            let (gp, gv) = g.split_at_mut(tn);
            self.evaluate(xp, xv, Some((gp, gv))).total
        };
        let (lo, hi) = self.full_bounds();
        NlpProblem::new(objective, x0)
            .with_bounds(lo, hi)
            .with_equalities(self.dynamics_rows())
    }

    pub fn plan_from_full(&self, x: &[f64], goal_index: usize) -> TrajectoryPlan {
        let n = self.dof();
        let tn = self.steps * n;
        TrajectoryPlan {
            positions: DMatrix::from_row_slice(self.steps, n, &x[..tn]),
            velocities: DMatrix::from_row_slice(self.steps, n, &x[tn..]),
            dt: self.dt,
            selected_goal_index: goal_index,
            standoff_index: self.standoff_index,
        }
    }

    /// Positions obtained by integrating `velocities` from `q0`.
    pub fn integrate(&self, velocities: &[f64]) -> Vec<f64> {
        let n = self.dof();
        let mut p = vec![0.0; self.steps * n];
        p[..n].copy_from_slice(self.q0.as_slice());
        for t in 1..self.steps {
            for j in 0..n {
                p[t * n + j] = p[(t - 1) * n + j] + self.dt * velocities[(t - 1) * n + j];
            }
        }
        p
    }

    pub fn reduced_problem(&self, init: &TrajectoryPlan) -> NlpProblem<'_> {
        let n = self.dof();
        let tn = self.steps * n;
        let (_, v0) = flatten(init);
        let (lo_all, hi_all) = self.full_bounds();
        let (ql, qu) = (self.chain.lower_limits(), self.chain.upper_limits());
        let objective = move |x: &[f64], g: &mut [f64]| {
            let p = self.integrate(x);
            let mut gp = vec![0.0; tn];
            let mut value = self.evaluate(&p, x, Some((&mut gp, g))).total;
            for t in 1..self.steps {
                for j in 0..n {
                    let q = p[t * n + j];
                    let over = (q - qu[j]).max(0.0) - (ql[j] - q).max(0.0);
                    value += POSITION_PENALTY * over * over;
                    gp[t * n + j] += 2.0 * POSITION_PENALTY * over;
                }
            }
            // q_t depends on every q̇_s with s < t.
            let mut acc = vec![0.0; n];
            for t in (0..self.steps - 1).rev() {
                for j in 0..n {
                    acc[j] += gp[(t + 1) * n + j];
                    g[t * n + j] += self.dt * acc[j];
                }
            }
            value
        };
        NlpProblem::new(objective, v0).with_bounds(lo_all[tn..].to_vec(), hi_all[tn..].to_vec())
    }

    pub fn plan_from_reduced(&self, v: &[f64], goal_index: usize) -> TrajectoryPlan {
        let p = self.integrate(v);
        TrajectoryPlan {
            positions: DMatrix::from_row_slice(self.steps, self.dof(), &p),
            velocities: DMatrix::from_row_slice(self.steps, self.dof(), v),
            dt: self.dt,
            selected_goal_index: goal_index,
            standoff_index: self.standoff_index,
        }
    }
}

/// Row-major position and velocity buffers of a plan.
pub fn flatten(plan: &TrajectoryPlan) -> (Vec<f64>, Vec<f64>) {
    let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
    (row_major(&plan.positions), row_major(&plan.velocities))
}
