use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::kinematics::{JointConfig, KinematicChain};
use crate::{Error, Result};

/// Discretized joint trajectory. Row `t` of `positions`/`velocities` is step
/// `t`; step 0 is the start configuration and `standoff_index` is the step
/// `δ` steps before the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPlan {
    pub positions: DMatrix<f64>,
    pub velocities: DMatrix<f64>,
    pub dt: f64,
    pub selected_goal_index: usize,
    pub standoff_index: usize,
}

/// Constraint satisfaction of a plan, as checked against a chain and start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub starts_at_q0: bool,
    pub rests_at_ends: bool,
    pub max_dynamics_residual: f64,
    pub positions_within_limits: bool,
    pub velocities_within_limits: bool,
}

impl ConstraintReport {
    pub fn satisfied(&self, dynamics_tol: f64) -> bool {
        self.starts_at_q0
            && self.rests_at_ends
            && self.max_dynamics_residual <= dynamics_tol
            && self.positions_within_limits
            && self.velocities_within_limits
    }
}

impl TrajectoryPlan {
    pub fn steps(&self) -> usize {
        self.positions.nrows()
    }

    pub fn dof(&self) -> usize {
        self.positions.ncols()
    }

    pub fn position(&self, t: usize) -> JointConfig {
        JointConfig::new(self.positions.row(t).iter().copied().collect())
    }

    pub fn velocity(&self, t: usize) -> JointConfig {
        JointConfig::new(self.velocities.row(t).iter().copied().collect())
    }

    pub fn final_position(&self) -> JointConfig {
        self.position(self.steps() - 1)
    }

    /// `max_t ‖q_{t+1} − q_t − q̇_t·dt‖∞`.
    pub fn max_dynamics_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 0..self.steps().saturating_sub(1) {
            for j in 0..self.dof() {
                let r = self.positions[(t + 1, j)]
                    - self.positions[(t, j)]
                    - self.velocities[(t, j)] * self.dt;
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    pub fn check_constraints(&self, chain: &KinematicChain, q0: &JointConfig) -> ConstraintReport {
        let (lo, hi) = (chain.lower_limits(), chain.upper_limits());
        let vmax = chain.velocity_limits();
        let last = self.steps() - 1;
        let n = self.dof();
        let starts_at_q0 = (0..n).all(|j| self.positions[(0, j)] == q0.0[j]);
        let rests_at_ends =
            (0..n).all(|j| self.velocities[(0, j)] == 0.0 && self.velocities[(last, j)] == 0.0);
        let positions_within_limits = self
            .positions
            .row_iter()
            .all(|r| (0..n).all(|j| r[j] >= lo[j] && r[j] <= hi[j]));
        let velocities_within_limits = self
            .velocities
            .row_iter()
            .all(|r| (0..n).all(|j| r[j].abs() <= vmax[j]));
        ConstraintReport {
            starts_at_q0,
            rests_at_ends,
            max_dynamics_residual: self.max_dynamics_residual(),
            positions_within_limits,
            velocities_within_limits,
        }
    }

    /// CSV with a `#` metadata line, the header `t,dt,q_1..q_n,dq_1..dq_n`
    /// and one row per step. Values use the shortest round-trip notation.
    pub fn to_csv(&self) -> String {
        let n = self.dof();
        let mut s = format!(
            "# selected_goal_index={} standoff_index={}\nt,dt",
            self.selected_goal_index, self.standoff_index
        );
        for j in 1..=n {
            let _ = write!(s, ",q_{j}");
        }
        for j in 1..=n {
            let _ = write!(s, ",dq_{j}");
        }
        s.push('\n');
        for t in 0..self.steps() {
            let _ = write!(s, "{t},{}", self.dt);
            for j in 0..n {
                let _ = write!(s, ",{}", self.positions[(t, j)]);
            }
            for j in 0..n {
                let _ = write!(s, ",{}", self.velocities[(t, j)]);
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut selected_goal_index = 0;
        let mut standoff_index = None;
        let mut header = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    let Some((k, v)) = kv.split_once('=') else { continue };
                    let v: usize = v
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad metadata `{kv}`")))?;
                    match k {
                        "selected_goal_index" => selected_goal_index = v,
                        "standoff_index" => standoff_index = Some(v),
                        _ => {}
                    }
                }
                continue;
            }
            if header.is_none() {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                if cols.len() < 4 || cols.len() % 2 != 0 || cols[0] != "t" || cols[1] != "dt" {
                    return Err(Error::Parse(format!("bad trajectory header `{line}`")));
                }
                let n = (cols.len() - 2) / 2;
                for j in 0..n {
                    if cols[2 + j] != format!("q_{}", j + 1) || cols[2 + n + j] != format!("dq_{}", j + 1)
                    {
                        return Err(Error::Parse(format!("bad trajectory header `{line}`")));
                    }
                }
                header = Some(cols.len());
                continue;
            }
            let width = header.expect("header parsed");
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse(format!("line {}: bad number", ln + 1)))?;
            if vals.len() != width {
                return Err(Error::Parse(format!(
                    "line {}: expected {width} columns, got {}",
                    ln + 1,
                    vals.len()
                )));
            }
            if vals[0] != rows.len() as f64 {
                return Err(Error::Parse(format!("line {}: step index out of order", ln + 1)));
            }
            rows.push(vals);
        }
        let width = header.ok_or_else(|| Error::Parse("trajectory has no header".into()))?;
        if rows.len() < 2 {
            return Err(Error::Parse("trajectory needs at least two steps".into()));
        }
        let n = (width - 2) / 2;
        let dt = rows[0][1];
        if !(dt > 0.0) || rows.iter().any(|r| r[1] != dt) {
            return Err(Error::Parse("dt must be positive and constant".into()));
        }
        let steps = rows.len();
        let positions = DMatrix::from_fn(steps, n, |t, j| rows[t][2 + j]);
        let velocities = DMatrix::from_fn(steps, n, |t, j| rows[t][2 + n + j]);
        let standoff_index = standoff_index.unwrap_or(steps - 1);
        if standoff_index >= steps {
            return Err(Error::Parse("standoff index beyond the last step".into()));
        }
        Ok(Self {
            positions,
            velocities,
            dt,
            selected_goal_index,
            standoff_index,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if self.steps() == 0 || self.dof() == 0 {
            return Err(Error::Invalid("cannot export an empty plan".into()));
        }
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(steps: usize, n: usize) -> TrajectoryPlan {
        TrajectoryPlan {
            positions: DMatrix::from_fn(steps, n, |t, j| (t as f64 * 0.1 + j as f64).sin() / 3.0),
            velocities: DMatrix::from_fn(steps, n, |t, j| 1e-17 * (t * n + j) as f64 - 0.1),
            dt: 0.2,
            selected_goal_index: 2,
            standoff_index: steps.saturating_sub(11),
        }
    }

    #[test]
    fn csv_round_trip_is_bit_identical() {
        let plan = sample(50, 7);
        let csv = plan.to_csv();
        let data_rows = csv.lines().filter(|l| !l.starts_with('#')).count() - 1;
        assert_eq!(data_rows, 50);
        let header = csv.lines().nth(1).unwrap();
        assert_eq!(header.split(',').count(), 16);
        assert!(header.starts_with("t,dt,q_1,"));
        assert_eq!(TrajectoryPlan::from_csv(&csv).unwrap(), plan);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        let csv = sample(5, 2).to_csv();
        let truncated: String = csv.lines().take(4).collect::<Vec<_>>().join("\n");
        let cut = &truncated[..truncated.rfind(',').unwrap()];
        assert!(TrajectoryPlan::from_csv(cut).is_err());
        assert!(TrajectoryPlan::from_csv("").is_err());
        assert!(TrajectoryPlan::from_csv("t,dt,q_1,dq_1\n").is_err());
        assert!(TrajectoryPlan::from_csv("x,y\n1,2\n").is_err());
    }

    #[test]
    fn empty_plan_cannot_be_exported() {
        let plan = TrajectoryPlan {
            positions: DMatrix::zeros(0, 7),
            velocities: DMatrix::zeros(0, 7),
            dt: 0.2,
            selected_goal_index: 0,
            standoff_index: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(plan.write_csv(&dir.path().join("p.csv")).is_err());
    }

    #[test]
    fn dynamics_residual_of_integrated_plan_is_zero() {
        let mut plan = sample(10, 3);
        for t in 0..9 {
            for j in 0..3 {
                plan.positions[(t + 1, j)] = plan.positions[(t, j)] + plan.dt * plan.velocities[(t, j)];
            }
        }
        assert!(plan.max_dynamics_residual() < 1e-15);
    }
}
