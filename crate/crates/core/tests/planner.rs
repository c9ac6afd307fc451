mod common;

use nalgebra::{Matrix3, Vector3};

use graspopt::costs::{config_collision_cost, CostKind};
use graspopt::ik;
use graspopt::planner::{
    self, filter_goals_collision, filter_goals_ik, initial_trajectory, rank_initializations, PlannerConfig,
    TrajectoryObjective,
};
use graspopt::{Error, JointConfig, RigidTransform};

fn q(values: [f64; 7]) -> JointConfig {
    JointConfig::new(values.to_vec())
}

/// Configurations in front of the robot, well inside the limits.
const NEAR: [f64; 7] = [0.3, -0.3, 0.0, -2.0, 0.0, 1.8, 0.8];
const NEAR_2: [f64; 7] = [-0.4, -0.2, 0.1, -2.1, 0.0, 2.0, 0.6];
const FAR_FORWARD: [f64; 7] = [0.0, 1.2, 0.0, -0.3, 0.0, 1.5, 0.8];

fn downward(at: Vector3<f64>) -> RigidTransform {
    RigidTransform::new(Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)), at)
}

fn summed_interpolation_cost(
    r: &graspopt::cli::Robot,
    grid: &graspopt::scene::SignedDistanceGrid,
    q_goal: &JointConfig,
    config: &PlannerConfig,
) -> f64 {
    let traj = initial_trajectory(&common::ready(), q_goal, config);
    (0..traj.steps())
        .map(|t| config_collision_cost(grid, &r.chain, &r.points, &traj.position(t), config.eps).unwrap())
        .sum()
}

#[test]
fn collision_filter_drops_goals_inside_the_wall() {
    let r = common::robot();
    let grid = common::wall(0.6);
    let goals = vec![
        downward(Vector3::new(0.3, 0.0, 0.5)),
        downward(Vector3::new(1.0, 0.0, 0.5)),
        downward(Vector3::new(0.4, 0.2, 5.0)),
    ];
    let kept = filter_goals_collision(&grid, &r.gripper, &goals);
    let inside = |g: &RigidTransform| r.gripper.points.iter().filter(|p| g.transform_point(p).x > 0.7).count();
    assert_eq!(inside(&goals[0]), 0);
    assert!(inside(&goals[1]) >= 5);
    assert_eq!(kept, vec![0, 2]);
    assert!(filter_goals_collision(&grid, &r.gripper, &[]).is_empty());
}

#[test]
fn ik_filter_agrees_with_batch_results() {
    let r = common::robot();
    let goals = vec![
        r.chain.tool_pose(&q(NEAR)).unwrap(),
        RigidTransform::from_translation(Vector3::new(3.0, 0.0, 0.0)),
        r.chain.tool_pose(&q(NEAR_2)).unwrap(),
    ];
    let q0 = common::ready();
    let kept = filter_goals_ik(&r.chain, &r.gripper, &goals, &[0, 1, 2], &q0, 0).unwrap();
    let restarts = ik::default_restarts(&r.chain, &q0, 0);
    let batch = ik::batch_ik(&r.chain, &r.gripper, &goals, &restarts, CostKind::PointMatching).unwrap();
    let expected: Vec<usize> = (0..3).filter(|&i| batch[i].success).collect();
    assert_eq!(kept.iter().map(|(i, _)| *i).collect::<Vec<_>>(), expected);
    assert_eq!(expected, vec![0, 2]);
    for (i, q_ik) in &kept {
        let pose = r.chain.tool_pose(q_ik).unwrap();
        assert!(ik::pose_errors(&pose, &goals[*i]).2);
    }
}

#[test]
fn ranking_prefers_the_collision_free_interpolation() {
    let r = common::robot();
    let grid = common::wall(0.6);
    let config = PlannerConfig::default();
    let (clear, blocked) = (q(NEAR), q(FAR_FORWARD));
    let clear_cost = summed_interpolation_cost(&r, &grid, &clear, &config);
    let blocked_cost = summed_interpolation_cost(&r, &grid, &blocked, &config);
    assert_eq!(clear_cost, 0.0);
    assert!(blocked_cost > 0.0);

    let candidates = vec![(7, blocked.clone()), (3, clear.clone())];
    let ranked = rank_initializations(&grid, &r.chain, &r.points, &common::ready(), &candidates, &config).unwrap();
    assert_eq!(ranked.iter().map(|(i, _)| *i).collect::<Vec<_>>(), vec![3, 7]);

    let single = rank_initializations(&grid, &r.chain, &r.points, &common::ready(), &candidates[..1], &config).unwrap();
    assert_eq!(single, candidates[..1].to_vec());
}

#[test]
fn ranking_ties_go_to_the_nearer_configuration() {
    let r = common::robot();
    let grid = common::empty_scene();
    let config = PlannerConfig::default();
    let q0 = common::ready();
    let mut near = q0.clone();
    near.0[0] += 0.5;
    let mut far = q0.clone();
    far.0[0] -= 2.0;
    let candidates = vec![(0, far), (1, near)];
    let ranked = rank_initializations(&grid, &r.chain, &r.points, &q0, &candidates, &config).unwrap();
    assert_eq!(ranked[0].0, 1);
}

#[test]
fn empty_scene_plan_reaches_the_goal() {
    let r = common::robot();
    let grid = common::empty_scene();
    let config = PlannerConfig::default();
    let goals = vec![r.chain.tool_pose(&q(NEAR)).unwrap()];
    let out = planner::plan(&r.chain, &r.points, &r.gripper, &grid, &common::ready(), &goals, &config).unwrap();
    assert!(out.converged());
    let quality =
        planner::evaluate_plan_quality(&r.chain, &r.points, &grid, &out.plan, &goals[0], config.standoff_offset)
            .unwrap();
    assert!(quality.final_translation_error < 0.01);
    assert!(quality.final_rotation_error < 5f64.to_radians());
    assert!(quality.standoff_error < 0.02);
    assert_eq!(out.breakdown.collision, 0.0);
    assert!(out.plan.check_constraints(&r.chain, &common::ready()).satisfied(1e-6));
    for g in &out.per_goal {
        assert!(g.objective <= g.initial_objective);
    }
}

#[test]
fn selected_goal_has_the_lowest_objective() {
    let r = common::robot();
    let grid = common::empty_scene();
    let config = PlannerConfig {
        top_n_goals: 2,
        ..PlannerConfig::default()
    };
    let goals = vec![r.chain.tool_pose(&q(NEAR)).unwrap(), r.chain.tool_pose(&q(NEAR_2)).unwrap()];
    let out = planner::plan(&r.chain, &r.points, &r.gripper, &grid, &common::ready(), &goals, &config).unwrap();
    assert_eq!(out.per_goal.len(), 2);
    let best = out
        .per_goal
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .unwrap();
    assert_eq!(out.plan.selected_goal_index, best.goal_index);
    assert_eq!(out.breakdown.total, best.objective);
}

#[test]
fn starting_at_the_goal_costs_almost_nothing() {
    let r = common::robot();
    let grid = common::empty_scene();
    let config = PlannerConfig {
        standoff_offset: 1e-3,
        ..PlannerConfig::default()
    };
    let start = q(NEAR);
    let goals = vec![r.chain.tool_pose(&start).unwrap()];
    let out = planner::plan(&r.chain, &r.points, &r.gripper, &grid, &start, &goals, &config).unwrap();
    assert!(out.breakdown.total < 1e-4, "objective {}", out.breakdown.total);
    assert!(out.plan.velocities.amax() < 0.01);
}

#[test]
fn all_goals_in_collision_is_infeasible() {
    let r = common::robot();
    let grid = common::grid_from(|_| -1.0);
    let goals = vec![r.chain.tool_pose(&q(NEAR)).unwrap()];
    let err = planner::plan(&r.chain, &r.points, &r.gripper, &grid, &common::ready(), &goals, &PlannerConfig::default())
        .unwrap_err();
    assert!(matches!(err, Error::NoFeasibleGoal(_)));
}

#[test]
fn common_weight_scaling_only_scales_weighted_terms() {
    let r = common::robot();
    let grid = common::wall(0.5);
    let base = PlannerConfig::default();
    let scaled = PlannerConfig {
        lambda1: 4.0 * base.lambda1,
        lambda2: 4.0 * base.lambda2,
        ..base.clone()
    };
    let goal = r.chain.tool_pose(&q(NEAR)).unwrap();
    let traj = initial_trajectory(&common::ready(), &q(FAR_FORWARD), &base);
    let eval = |c: &PlannerConfig| {
        TrajectoryObjective::new(&r.chain, &r.points, &r.gripper, &grid, goal, common::ready(), c)
            .unwrap()
            .evaluate_plan(&traj)
    };
    let (a, b) = (eval(&base), eval(&scaled));
    assert!(a.collision > 0.0);
    assert_eq!((a.goal, a.standoff, a.collision, a.velocity), (b.goal, b.standoff, b.collision, b.velocity));
    let weighted_a = a.total - a.goal - a.standoff;
    let weighted_b = b.total - b.goal - b.standoff;
    assert!((weighted_b - 4.0 * weighted_a).abs() < 1e-9 * weighted_b.abs());
}
