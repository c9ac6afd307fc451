mod common;

use std::path::Path;
use std::process::{Command, Output};

use graspopt::costs::goal_poses_to_json;
use graspopt::planner::TrajectoryPlan;
use graspopt::scene::io::write_sdf;
use graspopt::JointConfig;

const NEAR: [f64; 7] = [0.3, -0.3, 0.0, -2.0, 0.0, 1.8, 0.8];

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graspopt"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_near_goal(path: &Path) {
    let r = common::robot();
    let goal = r.chain.tool_pose(&JointConfig::new(NEAR.to_vec())).unwrap();
    std::fs::write(path, goal_poses_to_json(&[goal])).unwrap();
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["plan", "--help"]).status.code(), Some(0));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["plan", "--no-such-flag"]).status.code(), Some(1));
}

#[test]
fn missing_input_reports_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sdf",
        "--cloud",
        s(&dir.path().join("absent.xyz")),
        "--out",
        s(&dir.path().join("scene.sdf")),
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("error"));
    assert!(!dir.path().join("scene.sdf").exists());
}

#[test]
fn generated_scene_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let urdf = common::urdf();

    let gen = run(&[
        "gen-scene",
        "--kind",
        "tabletop",
        "--seed",
        "3",
        "--out-cloud",
        s(&p("cloud.xyz")),
        "--out-goals",
        s(&p("goals.json")),
    ]);
    assert_eq!(gen.status.code(), Some(0), "{}", stderr(&gen));

    let sdf = run(&["sdf", "--cloud", s(&p("cloud.xyz")), "--out", s(&p("scene.sdf"))]);
    assert_eq!(sdf.status.code(), Some(0), "{}", stderr(&sdf));
    assert!(stdout(&sdf).starts_with("dims"));

    let plan = run(&[
        "plan",
        "--urdf",
        s(&urdf),
        "--sdf",
        s(&p("scene.sdf")),
        "--goals",
        s(&p("goals.json")),
        "--q0",
        "0,-0.785,0,-2.356,0,1.571,0.785",
        "--out-traj",
        s(&p("traj.csv")),
        "--out-report",
        s(&p("report.json")),
    ]);
    let code = plan.status.code().unwrap();
    assert!(code == 0 || code == 3, "exit {code}: {}", stderr(&plan));
    let rep = report(&p("report.json"));
    assert_eq!(rep["converged"].as_bool().unwrap(), code == 0);

    let traj = TrajectoryPlan::read_csv(&p("traj.csv")).unwrap();
    assert_eq!(traj.steps(), 50);
    assert_eq!(traj.selected_goal_index as u64, rep["selected_goal_index"].as_u64().unwrap());

    let check = run(&["check", "--urdf", s(&urdf), "--sdf", s(&p("scene.sdf")), "--traj", s(&p("traj.csv"))]);
    assert_eq!(check.status.code(), Some(0), "{}", stderr(&check));
    assert!(stdout(&check).starts_with("OK"));
}

#[test]
fn empty_scene_fixture_converges() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    write_sdf(&p("empty.sdf"), &common::empty_scene()).unwrap();
    write_near_goal(&p("goals.json"));
    let plan = run(&[
        "plan",
        "--urdf",
        s(&common::urdf()),
        "--sdf",
        s(&p("empty.sdf")),
        "--goals",
        s(&p("goals.json")),
        "--out-traj",
        s(&p("traj.csv")),
        "--out-report",
        s(&p("report.json")),
    ]);
    assert_eq!(plan.status.code(), Some(0), "{}", stderr(&plan));
    let rep = report(&p("report.json"));
    assert!(rep["converged"].as_bool().unwrap());
    assert!(rep["quality"]["final_translation_error"].as_f64().unwrap() < 0.01);
    assert!(rep["quality"]["final_rotation_error"].as_f64().unwrap() < 5f64.to_radians());
    assert!(rep["max_equality_residual"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn colliding_goals_exit_with_no_feasible_goal() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    write_sdf(&p("solid.sdf"), &common::grid_from(|_| -1.0)).unwrap();
    write_near_goal(&p("goals.json"));
    let plan = run(&[
        "plan",
        "--urdf",
        s(&common::urdf()),
        "--sdf",
        s(&p("solid.sdf")),
        "--goals",
        s(&p("goals.json")),
        "--out-traj",
        s(&p("traj.csv")),
        "--out-report",
        s(&p("report.json")),
    ]);
    assert_eq!(plan.status.code(), Some(2));
    assert!(stderr(&plan).contains("no feasible goal"));
}

#[test]
fn ik_with_no_goals() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    std::fs::write(p("goals.json"), "[]").unwrap();
    let out = run(&[
        "ik",
        "--urdf",
        s(&common::urdf()),
        "--goals",
        s(&p("goals.json")),
        "--cost",
        "all",
        "--report",
        s(&p("ik.json")),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rep = report(&p("ik.json"));
    assert_eq!(rep["goals"].as_u64(), Some(0));
    assert_eq!(rep["success_counts"]["point_matching"].as_u64(), Some(0));
}

#[test]
fn truncated_trajectory_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    write_sdf(&p("empty.sdf"), &common::empty_scene()).unwrap();
    let plan = TrajectoryPlan {
        positions: nalgebra::DMatrix::from_fn(50, 7, |_, j| common::READY[j]),
        velocities: nalgebra::DMatrix::zeros(50, 7),
        dt: 0.1,
        selected_goal_index: 0,
        standoff_index: 39,
    };
    let csv = plan.to_csv();
    let mut lines: Vec<&str> = csv.lines().take(10).collect();
    let short = lines[9].rsplit_once(',').unwrap().0;
    lines[9] = short;
    std::fs::write(p("traj.csv"), lines.join("\n") + "\n").unwrap();
    let out = run(&["check", "--urdf", s(&common::urdf()), "--sdf", s(&p("empty.sdf")), "--traj", s(&p("traj.csv"))]);
    assert_ne!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("error"));

    std::fs::write(p("full.csv"), &csv).unwrap();
    let ok = run(&["check", "--urdf", s(&common::urdf()), "--sdf", s(&p("empty.sdf")), "--traj", s(&p("full.csv"))]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
}
