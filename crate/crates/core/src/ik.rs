//! Goal-reaching inverse kinematics: minimize a goal cost over joint limits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{pose_cost_fk, CostKind};
use crate::kinematics::{JointConfig, KinematicChain, RigidTransform};
use crate::robot_model::GripperPointSet;
use crate::solver::{self, NlpProblem, SolveOptions};
use crate::Result;

pub const TRANSLATION_TOLERANCE: f64 = 0.01;
pub const ROTATION_TOLERANCE: f64 = 5.0 * std::f64::consts::PI / 180.0;
/// Inner iterations per restart, shared by every cost kind.
pub const DEFAULT_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkResult {
    pub q_star: JointConfig,
    pub translation_error: f64,
    /// Geodesic angle between achieved and goal orientation, radians.
    pub rotation_error: f64,
    pub success: bool,
    pub objective_value: f64,
}

impl IkResult {
    fn score(&self) -> (bool, f64) {
        (self.success, self.translation_error + self.rotation_error)
    }
}

/// Whether the tool pose reaches `goal` within the success thresholds.
pub fn pose_errors(pose: &RigidTransform, goal: &RigidTransform) -> (f64, f64, bool) {
    let t = (pose.translation - goal.translation).norm();
    let r = pose.rotation_angle_to(goal);
    (t, r, t < TRANSLATION_TOLERANCE && r < ROTATION_TOLERANCE)
}

pub fn solve_ik(
    chain: &KinematicChain,
    gripper: &GripperPointSet,
    goal: &RigidTransform,
    q_init: &JointConfig,
    kind: CostKind,
) -> Result<IkResult> {
    solve_ik_with(chain, gripper, goal, q_init, kind, DEFAULT_ITERATIONS)
}

pub fn solve_ik_with(
    chain: &KinematicChain,
    gripper: &GripperPointSet,
    goal: &RigidTransform,
    q_init: &JointConfig,
    kind: CostKind,
    iterations: usize,
) -> Result<IkResult> {
    chain.forward_kinematics(q_init)?;
    let objective = |x: &[f64], g: &mut [f64]| {
        g.fill(0.0);
        let fk = chain.fk_unchecked(x);
        pose_cost_fk(kind, chain, &fk, goal, gripper, 1.0, g)
    };
    let problem = NlpProblem::new(objective, q_init.as_slice().to_vec())
        .with_bounds(chain.lower_limits(), chain.upper_limits());
    let opts = SolveOptions {
        max_outer: 1,
        max_inner: iterations,
        grad_tol: 1e-10,
        ..SolveOptions::default()
    };
    let report = solver::solve(&problem, &opts)?;
    let q_star = JointConfig::new(report.x_star);
    let pose = chain.tool_pose(&q_star)?;
    let (translation_error, rotation_error, success) = pose_errors(&pose, goal);
    Ok(IkResult {
        q_star,
        translation_error,
        rotation_error,
        success,
        objective_value: report.objective_value,
    })
}

/// The default restarts: mid-range, the current configuration (clamped),
/// and a seeded uniform sample inside the limits.
pub fn default_restarts(chain: &KinematicChain, current: &JointConfig, seed: u64) -> Vec<JointConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        chain.mid_range(),
        chain.clamp_to_limits(current),
        random_config(chain, &mut rng),
    ]
}

pub fn random_config(chain: &KinematicChain, rng: &mut impl Rng) -> JointConfig {
    let (lo, hi) = (chain.lower_limits(), chain.upper_limits());
    JointConfig::new(
        lo.iter()
            .zip(&hi)
            .map(|(&l, &h)| if h > l { rng.gen_range(l..h) } else { l })
            .collect(),
    )
}

/// Solves every goal from each restart in turn, keeping the first success
/// or else the restart with the smallest combined error. Goals are solved in
/// parallel; results do not depend on scheduling.
pub fn batch_ik(
    chain: &KinematicChain,
    gripper: &GripperPointSet,
    goals: &[RigidTransform],
    q_inits: &[JointConfig],
    kind: CostKind,
) -> Result<Vec<IkResult>> {
    batch_ik_with(chain, gripper, goals, q_inits, kind, DEFAULT_ITERATIONS)
}

pub fn batch_ik_with(
    chain: &KinematicChain,
    gripper: &GripperPointSet,
    goals: &[RigidTransform],
    q_inits: &[JointConfig],
    kind: CostKind,
    iterations: usize,
) -> Result<Vec<IkResult>> {
    goals
        .par_iter()
        .map(|goal| {
            let mut best: Option<IkResult> = None;
            for q in q_inits {
                let r = solve_ik_with(chain, gripper, goal, q, kind, iterations)?;
                let better = best.as_ref().is_none_or(|b| {
                    let (s, e) = r.score();
                    let (bs, be) = b.score();
                    (s && !bs) || (s == bs && e < be)
                });
                if better {
                    best = Some(r);
                }
                if best.as_ref().is_some_and(|b| b.success) {
                    break;
                }
            }
            Ok(best.expect("at least one restart"))
        })
        .collect()
}

pub fn success_count(results: &[IkResult]) -> usize {
    results.iter().filter(|r| r.success).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::tests::PLANAR_2R;
    use nalgebra::Vector3;

    fn planar() -> (KinematicChain, GripperPointSet) {
        let chain = KinematicChain::from_urdf_str(PLANAR_2R, "base", "tool").unwrap();
        let g = GripperPointSet::new(vec![
            Vector3::zeros(),
            Vector3::new(0.1, 0.0, 0.0),
            Vector3::new(0.0, 0.1, 0.0),
        ])
        .unwrap();
        (chain, g)
    }

    #[test]
    fn start_at_solution() {
        let (chain, g) = planar();
        let q = JointConfig::new(vec![0.4, -0.7]);
        let goal = chain.tool_pose(&q).unwrap();
        for kind in CostKind::ALL {
            let r = solve_ik(&chain, &g, &goal, &q, kind).unwrap();
            assert!(r.success, "{kind:?}");
            assert!(r.translation_error < 1e-9 && r.rotation_error < 1e-6);
        }
    }

    #[test]
    fn out_of_reach_goal_fails() {
        let (chain, g) = planar();
        let goal = RigidTransform::from_translation(Vector3::new(3.0, 0.0, 0.0));
        let r = solve_ik(&chain, &g, &goal, &chain.mid_range(), CostKind::PointMatching).unwrap();
        assert!(!r.success);
        assert!(r.translation_error >= 1.0);
        assert!(chain.within_limits(&r.q_star));
    }

    #[test]
    fn batch_is_deterministic_and_handles_empty_input() {
        let (chain, g) = planar();
        let inits = default_restarts(&chain, &JointConfig::zeros(2), 1);
        assert!(batch_ik(&chain, &g, &[], &inits, CostKind::Euler).unwrap().is_empty());
        let goal = chain.tool_pose(&JointConfig::new(vec![1.0, 0.5])).unwrap();
        let res = batch_ik(&chain, &g, &[goal; 4], &inits, CostKind::PointMatching).unwrap();
        assert!(res.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(success_count(&res), 4);
    }
}
