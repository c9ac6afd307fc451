//! Command-line surface of the `graspopt` binary.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 no feasible goal,
//! 3 solver non-convergence. Logs go to stderr; results go to files, with a
//! one-line summary on stdout.

mod scene_gen;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use crate::costs::{read_goal_poses, CostKind};
use crate::ik::{self, IkResult};
use crate::kinematics::{infer_base_and_tool, JointConfig, KinematicChain};
use crate::planner::{self, GoalSolveSummary, ObjectiveBreakdown, PlanQuality, PlannerConfig, TrajectoryPlan};
use crate::robot_model::{sample_surface_points, GripperPointSet, SurfacePointSet, DEFAULT_POINTS_PER_LINK};
use crate::scene::{self, io, PointCloud, DEFAULT_MARGIN, DEFAULT_RESOLUTION};
use crate::solver::SolveOptions;
use crate::Error;

pub use scene_gen::{CameraSpec, SceneBox, SceneKind, SceneSpec, DEFAULT_DENSITY};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "graspopt", version, about = "Joint motion and grasp planning on point clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct RobotArgs {
    /// Robot description (URDF).
    #[arg(long)]
    pub urdf: PathBuf,
    /// Base link; defaults to the URDF's root link.
    #[arg(long)]
    pub base_link: Option<String>,
    /// Tool (gripper) link; defaults to the URDF's unique leaf link.
    #[arg(long)]
    pub tool_link: Option<String>,
    /// Surface points sampled per link.
    #[arg(long, default_value_t = DEFAULT_POINTS_PER_LINK)]
    pub points_per_link: usize,
    /// Seed of the surface point sampling.
    #[arg(long, default_value_t = 0)]
    pub sample_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CostArg {
    Pm,
    Quat,
    Euler,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a signed distance grid from a point cloud or a depth image.
    Sdf {
        /// XYZ or PLY point cloud (unsigned distances).
        #[arg(long, conflicts_with = "depth", required_unless_present = "depth")]
        cloud: Option<PathBuf>,
        /// 16-bit PGM depth image in millimeters (signed distances).
        #[arg(long)]
        depth: Option<PathBuf>,
        /// Camera file for the depth image; defaults to the `.cam` sidecar.
        #[arg(long, requires = "depth")]
        camera: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: f64,
        #[arg(long, default_value_t = DEFAULT_MARGIN)]
        margin: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve IK for every goal and report success counts per cost.
    Ik {
        #[command(flatten)]
        robot: RobotArgs,
        #[arg(long)]
        goals: PathBuf,
        #[arg(long, value_enum, default_value_t = CostArg::Pm)]
        cost: CostArg,
        /// Current configuration used as one restart (comma separated).
        #[arg(long)]
        q0: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
    },
    /// Plan a grasp trajectory.
    Plan {
        #[command(flatten)]
        robot: RobotArgs,
        #[arg(long)]
        sdf: PathBuf,
        #[arg(long)]
        goals: PathBuf,
        /// Start configuration (comma separated); defaults to mid-range.
        #[arg(long)]
        q0: Option<String>,
        /// JSON planner configuration; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "T")]
        steps: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        lambda1: Option<f64>,
        #[arg(long)]
        lambda2: Option<f64>,
        #[arg(long)]
        delta: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        standoff_offset: Option<f64>,
        #[arg(long)]
        top_n_goals: Option<usize>,
        /// Use the velocity-only formulation.
        #[arg(long)]
        reduced: bool,
        #[arg(long)]
        out_traj: PathBuf,
        #[arg(long)]
        out_report: PathBuf,
    },
    /// Check a trajectory for collisions.
    Check {
        #[command(flatten)]
        robot: RobotArgs,
        #[arg(long)]
        sdf: PathBuf,
        #[arg(long)]
        traj: PathBuf,
    },
    /// Generate a synthetic scene cloud and goal set.
    GenScene {
        #[arg(long, value_enum)]
        kind: SceneKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scene specification (JSON) for the custom kind.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Point cloud sampled from the obstacle surfaces (XYZ or PLY).
        #[arg(long)]
        out_cloud: PathBuf,
        #[arg(long)]
        out_goals: PathBuf,
        /// Rendered depth image (PGM) with a `.cam` camera sidecar.
        #[arg(long)]
        out_depth: Option<PathBuf>,
    },
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NoFeasibleGoal(_) => EXIT_INFEASIBLE,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<i32, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(command: Command) -> CmdResult {
    match command {
        Command::Sdf {
            cloud,
            depth,
            camera,
            resolution,
            margin,
            out,
        } => cmd_sdf(cloud.as_deref(), depth.as_deref(), camera.as_deref(), resolution, margin, &out),
        Command::Ik {
            robot,
            goals,
            cost,
            q0,
            seed,
            report,
        } => cmd_ik(&robot, &goals, cost, q0.as_deref(), seed, &report),
        Command::Plan {
            robot,
            sdf,
            goals,
            q0,
            config,
            steps,
            horizon,
            lambda1,
            lambda2,
            delta,
            eps,
            standoff_offset,
            top_n_goals,
            reduced,
            out_traj,
            out_report,
        } => {
            let mut cfg = match &config {
                Some(path) => read_config(path)?,
                None => PlannerConfig::default(),
            };
            macro_rules! apply {
                ($($field:ident <- $flag:expr),*) => {$(if let Some(v) = $flag { cfg.$field = v; })*};
            }
            apply!(steps <- steps, horizon <- horizon, lambda1 <- lambda1, lambda2 <- lambda2,
                delta <- delta, eps <- eps, standoff_offset <- standoff_offset,
                top_n_goals <- top_n_goals);
            cfg.reduced |= reduced;
            cmd_plan(&robot, &sdf, &goals, q0.as_deref(), &cfg, &out_traj, &out_report)
        }
        Command::Check { robot, sdf, traj } => cmd_check(&robot, &sdf, &traj),
        Command::GenScene {
            kind,
            seed,
            spec,
            out_cloud,
            out_goals,
            out_depth,
        } => cmd_gen_scene(kind, seed, spec.as_deref(), &out_cloud, &out_goals, out_depth.as_deref()),
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

pub fn read_config(path: &Path) -> std::result::Result<PlannerConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> std::result::Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| usage(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

pub fn parse_config_vector(text: &str, dof: usize) -> std::result::Result<JointConfig, CliError> {
    let vals: Vec<f64> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("bad joint configuration `{text}`")))?;
    if vals.len() != dof {
        return Err(usage(format!("joint configuration has {} values, robot has {dof} joints", vals.len())));
    }
    Ok(JointConfig::new(vals))
}

pub struct Robot {
    pub chain: KinematicChain,
    pub points: SurfacePointSet,
    pub gripper: GripperPointSet,
}

pub fn load_robot(args: &RobotArgs) -> crate::Result<Robot> {
    let text = std::fs::read_to_string(&args.urdf).map_err(|e| Error::io(&args.urdf, e))?;
    let (root, leaf) = match (&args.base_link, &args.tool_link) {
        (Some(b), Some(t)) => (b.clone(), t.clone()),
        (b, t) => {
            let (root, leaf) = infer_base_and_tool(&text)?;
            (b.clone().unwrap_or(root), t.clone().unwrap_or(leaf))
        }
    };
    let chain = KinematicChain::from_urdf_file(&args.urdf, &root, &leaf)?;
    let points = sample_surface_points(&chain, args.points_per_link, args.sample_seed)?;
    let gripper = GripperPointSet::from_surface(&chain, &points)?;
    info!(
        "robot {}: {} dofs, {} surface points, {} gripper points",
        args.urdf.display(),
        chain.dof(),
        points.len(),
        gripper.len()
    );
    Ok(Robot {
        chain,
        points,
        gripper,
    })
}

pub fn cmd_sdf(
    cloud: Option<&Path>,
    depth: Option<&Path>,
    camera: Option<&Path>,
    resolution: f64,
    margin: f64,
    out: &Path,
) -> CmdResult {
    let cloud = match (cloud, depth) {
        (Some(path), _) => io::read_point_cloud(path)?,
        (None, Some(pgm)) => {
            let cam = camera.map(Path::to_path_buf).unwrap_or_else(|| io::camera_sidecar(pgm));
            let img = Arc::new(io::read_depth_image(pgm, &cam)?);
            scene::backproject(&img)
        }
        (None, None) => return Err(usage("either --cloud or --depth is required")),
    };
    let grid = scene::build_sdf(&cloud, resolution, margin)?;
    io::write_sdf(out, &grid)?;
    let [nx, ny, nz] = grid.dims;
    println!(
        "dims {nx} {ny} {nz} min {:.6} max {:.6}",
        grid.min_value(),
        grid.max_value()
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct IkReport {
    goals: usize,
    success_counts: BTreeMap<&'static str, usize>,
    results: BTreeMap<&'static str, Vec<IkResult>>,
}

pub fn cmd_ik(
    robot: &RobotArgs,
    goals: &Path,
    cost: CostArg,
    q0: Option<&str>,
    seed: u64,
    report: &Path,
) -> CmdResult {
    let robot = load_robot(robot)?;
    let goals = read_goal_poses(goals)?;
    let current = match q0 {
        Some(text) => parse_config_vector(text, robot.chain.dof())?,
        None => robot.chain.mid_range(),
    };
    let kinds: Vec<CostKind> = match cost {
        CostArg::Pm => vec![CostKind::PointMatching],
        CostArg::Quat => vec![CostKind::Quaternion],
        CostArg::Euler => vec![CostKind::Euler],
        CostArg::All => CostKind::ALL.to_vec(),
    };
    let restarts = ik::default_restarts(&robot.chain, &current, seed);
    let mut out = IkReport {
        goals: goals.len(),
        success_counts: BTreeMap::new(),
        results: BTreeMap::new(),
    };
    for kind in kinds {
        let results = ik::batch_ik(&robot.chain, &robot.gripper, &goals, &restarts, kind)?;
        let count = ik::success_count(&results);
        println!("{} {count}/{}", kind.name(), goals.len());
        out.success_counts.insert(kind.name(), count);
        out.results.insert(kind.name(), results);
    }
    write_json(report, &out)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct PlanReport<'a> {
    selected_goal_index: usize,
    converged: bool,
    objective: ObjectiveBreakdown,
    max_equality_residual: f64,
    wall_time: f64,
    goals: usize,
    goals_after_collision_filter: usize,
    goals_after_ik_filter: usize,
    quality: PlanQuality,
    q0: Vec<f64>,
    config: &'a PlannerConfig,
    solver: SolveOptions,
    per_goal: Vec<GoalSolveSummary>,
}

pub fn cmd_plan(
    robot: &RobotArgs,
    sdf: &Path,
    goals: &Path,
    q0: Option<&str>,
    config: &PlannerConfig,
    out_traj: &Path,
    out_report: &Path,
) -> CmdResult {
    config.validate()?;
    let robot = load_robot(robot)?;
    let grid = io::read_sdf(sdf)?;
    let goal_poses = read_goal_poses(goals)?;
    let q0 = match q0 {
        Some(text) => parse_config_vector(text, robot.chain.dof())?,
        None => robot.chain.mid_range(),
    };
    let outcome = planner::plan(
        &robot.chain,
        &robot.points,
        &robot.gripper,
        &grid,
        &q0,
        &goal_poses,
        config,
    )?;
    let selected = outcome.plan.selected_goal_index;
    let quality = planner::evaluate_plan_quality(
        &robot.chain,
        &robot.points,
        &grid,
        &outcome.plan,
        &goal_poses[selected],
        config.standoff_offset,
    )?;
    outcome.plan.write_csv(out_traj)?;
    let converged = outcome.converged();
    let report = PlanReport {
        selected_goal_index: selected,
        converged,
        objective: outcome.breakdown,
        max_equality_residual: outcome.plan.max_dynamics_residual(),
        wall_time: outcome.wall_time,
        goals: goal_poses.len(),
        goals_after_collision_filter: outcome.goals_after_collision_filter,
        goals_after_ik_filter: outcome.goals_after_ik_filter,
        quality,
        q0: outcome.q0.as_slice().to_vec(),
        config,
        solver: config.solve_options(),
        per_goal: outcome.per_goal,
    };
    write_json(out_report, &report)?;
    println!(
        "goal {selected} translation {:.4} rotation {:.4} objective {:.6}",
        quality.final_translation_error, quality.final_rotation_error, outcome.breakdown.total
    );
    Ok(if converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

pub fn cmd_check(robot: &RobotArgs, sdf: &Path, traj: &Path) -> CmdResult {
    let robot = load_robot(robot)?;
    let grid = io::read_sdf(sdf)?;
    let plan = TrajectoryPlan::read_csv(traj)?;
    if plan.dof() != robot.chain.dof() {
        return Err(usage(format!(
            "trajectory has {} joints, robot has {}",
            plan.dof(),
            robot.chain.dof()
        )));
    }
    let report = scene::check_trajectory_collision(&grid, &robot.chain, &robot.points, &plan)?;
    if report.in_collision {
        println!("COLLISION {}", report.worst_config_negative_count);
    } else {
        println!("OK {}", report.worst_config_negative_count);
    }
    Ok(EXIT_OK)
}

pub fn cmd_gen_scene(
    kind: SceneKind,
    seed: u64,
    spec: Option<&Path>,
    out_cloud: &Path,
    out_goals: &Path,
    out_depth: Option<&Path>,
) -> CmdResult {
    let scene = match (kind, spec) {
        (SceneKind::Custom, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<SceneSpec>(&text)
                .map_err(|e| usage(format!("scene spec {}: {e}", path.display())))?
        }
        (SceneKind::Custom, None) => return Err(usage("--kind custom requires --spec")),
        (kind, _) => SceneSpec::generate(kind, seed)?,
    };
    scene.validate()?;
    let points = scene.sample_cloud(seed);
    let cloud = PointCloud::new(points)?;
    let is_ply = out_cloud
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    if is_ply {
        io::write_ply(out_cloud, &cloud.points)?;
    } else {
        io::write_xyz(out_cloud, &cloud.points)?;
    }
    let goals = crate::costs::GoalSet::new(scene.goal_poses()?)?;
    goals.write(out_goals)?;
    if let Some(pgm) = out_depth {
        let img = scene.render_depth()?;
        io::write_depth_image(pgm, &io::camera_sidecar(pgm), &img)?;
    }
    println!("{} points, {} goals", cloud.len(), goals.len());
    Ok(EXIT_OK)
}
