//! Bound and linear-equality constrained nonlinear programming.
//!
//! `minimize f(x)  s.t.  l ≤ x ≤ u,  a_jᵀx = b_j`
//!
//! Equalities are handled by an augmented Lagrangian
//! `L_A(x; λ, ρ) = f(x) + λᵀc(x) + ρ/2 ‖c(x)‖²` with `c(x) = Ax − b`, and each
//! subproblem is minimized over the box with a projected limited-memory BFGS
//! method and a deterministic backtracking line search. Variables with
//! `l = u` are fixed exactly. When equalities are present the L-BFGS seed
//! matrix is `(σI + ρAᵀA)⁻¹` on the free variables, applied by conjugate
//! gradients, so the penalty curvature is exact rather than learned.

use std::collections::VecDeque;
use std::time::Instant;

use serde::Serialize;

use crate::{Error, Result};

/// Objective `x ↦ f(x)`; writes `∇f(x)` into `grad` (same length as `x`).
pub trait Objective {
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<F> Objective for F
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self(x, grad)
    }
}

/// Sparse row `Σ coeffs[k]·x[indices[k]] = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEquality {
    pub indices: Vec<usize>,
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl LinearEquality {
    pub fn new(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        let (indices, coeffs) = terms.into_iter().unzip();
        Self {
            indices,
            coeffs,
            rhs,
        }
    }

    #[inline]
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.coeffs)
            .map(|(&i, &a)| a * x[i])
            .sum::<f64>()
            - self.rhs
    }
}

pub struct NlpProblem<'a> {
    pub dim: usize,
    pub objective: Box<dyn Objective + 'a>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub equalities: Vec<LinearEquality>,
    pub x0: Vec<f64>,
}

impl<'a> NlpProblem<'a> {
    /// Unconstrained-box problem of dimension `x0.len()`.
    pub fn new(objective: impl Objective + 'a, x0: Vec<f64>) -> Self {
        let dim = x0.len();
        Self {
            dim,
            objective: Box::new(objective),
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
            equalities: Vec::new(),
            x0,
        }
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn with_equalities(mut self, equalities: Vec<LinearEquality>) -> Self {
        self.equalities = equalities;
        self
    }

    fn validate(&self) -> Result<()> {
        for (name, len) in [
            ("lower", self.lower.len()),
            ("upper", self.upper.len()),
            ("x0", self.x0.len()),
        ] {
            if len != self.dim {
                return Err(Error::Invalid(format!(
                    "{name} has length {len}, problem dimension is {}",
                    self.dim
                )));
            }
        }
        if let Some(i) = (0..self.dim).find(|&i| !(self.lower[i] <= self.upper[i])) {
            return Err(Error::Invalid(format!("bounds cross at variable {i}")));
        }
        for (j, eq) in self.equalities.iter().enumerate() {
            if eq.indices.len() != eq.coeffs.len()
                || eq.indices.iter().any(|&i| i >= self.dim)
                || !eq.coeffs.iter().any(|&a| a != 0.0)
            {
                return Err(Error::Invalid(format!("equality {j} is malformed or empty")));
            }
        }
        Ok(())
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, &l), &u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(l, u);
        }
    }

    pub fn max_equality_residual(&self, x: &[f64]) -> f64 {
        self.equalities
            .iter()
            .map(|e| e.residual(x).abs())
            .fold(0.0, f64::max)
    }

    /// `‖P(x − g) − x‖∞`.
    pub fn projected_gradient_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        (0..self.dim)
            .map(|i| ((x[i] - g[i]).clamp(self.lower[i], self.upper[i]) - x[i]).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    pub max_outer: usize,
    pub max_inner: usize,
    pub eq_tol: f64,
    pub grad_tol: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    /// Required residual reduction per outer iteration before the penalty grows.
    pub residual_shrink: f64,
    pub memory: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_outer: 30,
            max_inner: 200,
            eq_tol: 1e-6,
            grad_tol: 1e-6,
            initial_penalty: 10.0,
            penalty_growth: 5.0,
            residual_shrink: 0.25,
            memory: 10,
        }
    }
}

/// Augmented-Lagrangian value at the start and end of one outer iteration,
/// both under that iteration's multipliers and penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeritRecord {
    pub before: f64,
    pub after: f64,
    pub penalty: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub x_star: Vec<f64>,
    pub objective_value: f64,
    pub max_equality_residual: f64,
    pub projected_gradient_norm: f64,
    /// Total inner iterations.
    pub iterations: usize,
    pub outer_iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub wall_time: f64,
    pub merit: Vec<MeritRecord>,
}

impl SolveReport {
    /// Whether no outer iteration increased its own merit function.
    pub fn merit_monotone(&self) -> bool {
        self.merit.iter().all(|m| m.after <= m.before)
    }
}

struct Lagrangian<'p, 'a> {
    problem: &'p NlpProblem<'a>,
    lambda: Vec<f64>,
    rho: f64,
    evaluations: usize,
}

impl Lagrangian<'_, '_> {
    /// Returns `(L_A, f)` and writes `∇L_A` into `grad`.
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> (f64, f64) {
        self.evaluations += 1;
        let f = self.problem.objective.evaluate(x, grad);
        let mut value = f;
        for (j, eq) in self.problem.equalities.iter().enumerate() {
            let c = eq.residual(x);
            value += self.lambda[j] * c + 0.5 * self.rho * c * c;
            let w = self.lambda[j] + self.rho * c;
            for (&i, &a) in eq.indices.iter().zip(&eq.coeffs) {
                grad[i] += w * a;
            }
        }
        (value, f)
    }

    /// `out = ρAᵀA v` restricted to the free variables.
    fn penalty_curvature(&self, active: &[bool], v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for eq in &self.problem.equalities {
            let free = || eq.indices.iter().zip(&eq.coeffs).filter(|(&i, _)| !active[i]);
            let w: f64 = free().map(|(&i, &a)| a * v[i]).sum();
            if w != 0.0 {
                for (&i, &a) in free() {
                    out[i] += self.rho * a * w;
                }
            }
        }
    }

    /// Replaces the free part of `r` by `(σI + ρAᵀA)⁻¹ r` (Jacobi-preconditioned CG).
    fn apply_seed(&self, active: &[bool], sigma: f64, r: &mut [f64]) {
        const MAX_CG: usize = 100;
        const CG_TOL: f64 = 1e-10;
        let n = r.len();
        let mut diag = vec![sigma; n];
        for eq in &self.problem.equalities {
            for (&i, &a) in eq.indices.iter().zip(&eq.coeffs) {
                diag[i] += self.rho * a * a;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| if active[i] { 0.0 } else { r[i] }).collect();
        let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if b_norm == 0.0 {
            return;
        }
        let mut z = vec![0.0; n];
        let mut res = b.clone();
        let mut pre: Vec<f64> = (0..n).map(|i| res[i] / diag[i]).collect();
        let mut p = pre.clone();
        let mut rz: f64 = (0..n).map(|i| res[i] * pre[i]).sum();
        let mut ap = vec![0.0; n];
        for _ in 0..MAX_CG {
            self.penalty_curvature(active, &p, &mut ap);
            for i in 0..n {
                if !active[i] {
                    ap[i] += sigma * p[i];
                }
            }
            let pap: f64 = (0..n).map(|i| p[i] * ap[i]).sum();
            if !(pap > 0.0) {
                break;
            }
            let step = rz / pap;
            for i in 0..n {
                z[i] += step * p[i];
                res[i] -= step * ap[i];
            }
            if res.iter().map(|v| v * v).sum::<f64>().sqrt() <= CG_TOL * b_norm {
                break;
            }
            for i in 0..n {
                pre[i] = if active[i] { 0.0 } else { res[i] / diag[i] };
            }
            let rz_new: f64 = (0..n).map(|i| res[i] * pre[i]).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = pre[i] + beta * p[i];
            }
        }
        for i in 0..n {
            if !active[i] {
                r[i] = z[i];
            }
        }
    }
}

/// Result of one bound-constrained subproblem.
struct Inner {
    value: f64,
    objective: f64,
    pg_norm: f64,
    iterations: usize,
    /// Accepted steps; zero means the first line search already failed.
    steps: usize,
}

/// Projected L-BFGS on `L_A` from `x` (updated in place). `grad` holds
/// `∇L_A(x)` on entry and exit.
fn minimize_box(
    lag: &mut Lagrangian<'_, '_>,
    x: &mut [f64],
    grad: &mut [f64],
    mut value: f64,
    mut objective: f64,
    tol: f64,
    opts: &SolveOptions,
) -> Inner {
    const ARMIJO: f64 = 1e-4;
    const MAX_BACKTRACK: usize = 30;
    let problem = lag.problem;
    let n = problem.dim;
    let fixed: Vec<bool> = (0..n).map(|i| problem.lower[i] == problem.upper[i]).collect();
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(opts.memory);
    let mut dir = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];
    let mut alpha_buf = vec![0.0; opts.memory];
    let mut iterations = 0;
    let mut steps = 0;
    let mut pg_norm = problem.projected_gradient_norm(x, grad);
    let precondition = !problem.equalities.is_empty();
    // Curvature estimate of f alone, for the seed matrix.
    let mut sigma = 1.0;
    let mut penalty_part = vec![0.0; n];
    let none_active = vec![false; n];

    while pg_norm > tol && iterations < opts.max_inner {
        iterations += 1;
        // Variables held at a bound by the gradient stay put this iteration.
        let active: Vec<bool> = (0..n)
            .map(|i| {
                fixed[i]
                    || (x[i] <= problem.lower[i] && grad[i] > 0.0)
                    || (x[i] >= problem.upper[i] && grad[i] < 0.0)
            })
            .collect();

        let mut accepted = false;
        for use_memory in [true, false] {
            if !use_memory {
                memory.clear();
            }
            for i in 0..n {
                dir[i] = if active[i] { 0.0 } else { -grad[i] };
            }
            if !memory.is_empty() {
                let lag_ref = &*lag;
                let seed = |d: &mut [f64]| lag_ref.apply_seed(&active, sigma, d);
                let seed: Option<&dyn Fn(&mut [f64])> = if precondition { Some(&seed) } else { None };
                two_loop(&memory, &active, &mut dir, &mut alpha_buf, seed);
            }
            let mut slope: f64 = (0..n).map(|i| grad[i] * dir[i]).sum();
            if !(slope < 0.0) {
                if !use_memory {
                    break;
                }
                continue;
            }
            let mut alpha = 1.0;
            if memory.is_empty() {
                let gmax = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
                alpha = (1.0 / gmax).min(1.0);
            }
            for _ in 0..MAX_BACKTRACK {
                for i in 0..n {
                    trial[i] = (x[i] + alpha * dir[i]).clamp(problem.lower[i], problem.upper[i]);
                }
                slope = (0..n).map(|i| grad[i] * (trial[i] - x[i])).sum();
                if slope >= 0.0 {
                    alpha *= 0.5;
                    continue;
                }
                let (v, f) = lag.eval(&trial, &mut trial_grad);
                if v.is_finite() && v <= value + ARMIJO * slope {
                    let s: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
                    let y: Vec<f64> = (0..n).map(|i| trial_grad[i] - grad[i]).collect();
                    let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                    let ss: f64 = s.iter().map(|a| a * a).sum();
                    let yy: f64 = y.iter().map(|a| a * a).sum();
                    if precondition {
                        lag.penalty_curvature(&none_active, &s, &mut penalty_part);
                        let yf: Vec<f64> = (0..n).map(|i| y[i] - penalty_part[i]).collect();
                        let syf: f64 = s.iter().zip(&yf).map(|(a, b)| a * b).sum();
                        let yfyf: f64 = yf.iter().map(|a| a * a).sum();
                        let estimate = if syf > 0.0 { yfyf / syf } else { (yfyf / ss).sqrt() };
                        if estimate.is_finite() && ss > 0.0 {
                            sigma = estimate.max(1e-10);
                        }
                    }
                    if sy > 1e-10 * (ss * yy).sqrt() {
                        if memory.len() == opts.memory {
                            memory.pop_front();
                        }
                        memory.push_back((s, y));
                    }
                    x.copy_from_slice(&trial);
                    grad.copy_from_slice(&trial_grad);
                    value = v;
                    objective = f;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            break;
        }
        steps += 1;
        pg_norm = problem.projected_gradient_norm(x, grad);
    }
    Inner {
        value,
        objective,
        pg_norm,
        iterations,
        steps,
    }
}

/// Applies the L-BFGS inverse-Hessian approximation to `dir` (which holds
/// the negated free gradient), restricted to the free variables.
fn two_loop(
    memory: &VecDeque<(Vec<f64>, Vec<f64>)>,
    active: &[bool],
    dir: &mut [f64],
    alpha: &mut [f64],
    seed: Option<&dyn Fn(&mut [f64])>,
) {
    let free_dot = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .zip(active)
            .filter(|(_, &act)| !act)
            .map(|((x, y), _)| x * y)
            .sum()
    };
    for (k, (s, y)) in memory.iter().enumerate().rev() {
        let sy = free_dot(s, y);
        if sy <= 0.0 {
            alpha[k] = 0.0;
            continue;
        }
        alpha[k] = free_dot(s, dir) / sy;
        for i in 0..dir.len() {
            if !active[i] {
                dir[i] -= alpha[k] * y[i];
            }
        }
    }
    match seed {
        Some(apply) => apply(dir),
        None => {
            let (s, y) = memory.back().expect("memory is non-empty");
            let (sy, yy) = (free_dot(s, y), free_dot(y, y));
            let gamma = if sy > 0.0 && yy > 0.0 { sy / yy } else { 1.0 };
            for d in dir.iter_mut() {
                *d *= gamma;
            }
        }
    }
    for (k, (s, y)) in memory.iter().enumerate() {
        let sy = free_dot(s, y);
        if sy <= 0.0 {
            continue;
        }
        let beta = free_dot(y, dir) / sy;
        for i in 0..dir.len() {
            if !active[i] {
                dir[i] += (alpha[k] - beta) * s[i];
            }
        }
    }
}

pub fn solve(problem: &NlpProblem<'_>, opts: &SolveOptions) -> Result<SolveReport> {
    let start = Instant::now();
    problem.validate()?;
    let n = problem.dim;
    let mut x = problem.x0.clone();
    problem.project(&mut x);

    let mut lag = Lagrangian {
        problem,
        lambda: vec![0.0; problem.equalities.len()],
        rho: opts.initial_penalty,
        evaluations: 0,
    };
    let mut grad = vec![0.0; n];
    let (mut value, mut objective) = lag.eval(&x, &mut grad);
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteObjective);
    }

    let mut merit = Vec::new();
    let mut iterations = 0;
    let mut residual = problem.max_equality_residual(&x);
    let mut pg_norm = problem.projected_gradient_norm(&x, &grad);
    let mut converged = residual <= opts.eq_tol && pg_norm <= opts.grad_tol;
    let has_equalities = !problem.equalities.is_empty();
    let mut outer = 0;

    while !converged && outer < opts.max_outer {
        // Loose subproblem tolerances early, tightening geometrically.
        let tol = if has_equalities {
            (1e-2 * 0.1f64.powi(outer as i32)).max(opts.grad_tol)
        } else {
            opts.grad_tol
        };
        outer += 1;
        let before = value;
        let inner = minimize_box(&mut lag, &mut x, &mut grad, value, objective, tol, opts);
        iterations += inner.iterations;
        objective = inner.objective;
        let new_residual = problem.max_equality_residual(&x);
        merit.push(MeritRecord {
            before,
            after: inner.value,
            penalty: lag.rho,
            residual: new_residual,
        });

        if !has_equalities {
            pg_norm = inner.pg_norm;
            residual = 0.0;
            converged = pg_norm <= opts.grad_tol;
            break;
        }

        // First-order multiplier update; ∇L_A(x) then equals ∇f + Aᵀλ.
        for (j, eq) in problem.equalities.iter().enumerate() {
            lag.lambda[j] += lag.rho * eq.residual(&x);
        }
        if new_residual > opts.eq_tol && new_residual > opts.residual_shrink * residual {
            lag.rho *= opts.penalty_growth;
        }
        residual = new_residual;
        let (v, f) = lag.eval(&x, &mut grad);
        value = v;
        objective = f;
        pg_norm = problem.projected_gradient_norm(&x, &grad);
        log::debug!(
            "outer {outer}: f {objective:.6e} residual {residual:.2e} pg {pg_norm:.2e} inner {} (pg {:.2e}) rho {:.1e} evals {}",
            inner.iterations,
            inner.pg_norm,
            lag.rho,
            lag.evaluations
        );
        converged = residual <= opts.eq_tol && pg_norm <= opts.grad_tol;
        if !converged && inner.steps == 0 && residual <= opts.eq_tol {
            // Feasible and no descent step exists along the model direction.
            break;
        }
    }

    Ok(SolveReport {
        x_star: x,
        objective_value: objective,
        max_equality_residual: residual,
        projected_gradient_norm: pg_norm,
        iterations,
        outer_iterations: outer,
        evaluations: lag.evaluations,
        converged,
        wall_time: start.elapsed().as_secs_f64(),
        merit,
    })
}

/// Largest deviation of the supplied gradient from central differences,
/// relative to the finite-difference gradient: `‖g − g_fd‖∞ / ‖g_fd‖∞`.
pub fn check_gradient(problem: &NlpProblem<'_>, x: &[f64], step: f64) -> f64 {
    let n = problem.dim;
    let mut grad = vec![0.0; n];
    problem.objective.evaluate(x, &mut grad);
    let mut scratch = vec![0.0; n];
    let mut xp = x.to_vec();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..n {
        xp[i] = x[i] + step;
        let fp = problem.objective.evaluate(&xp, &mut scratch);
        xp[i] = x[i] - step;
        let fm = problem.objective.evaluate(&xp, &mut scratch);
        xp[i] = x[i];
        let fd = (fp - fm) / (2.0 * step);
        worst = worst.max((grad[i] - fd).abs());
        scale = scale.max(fd.abs());
    }
    if worst == 0.0 {
        0.0
    } else {
        worst / scale.max(f64::MIN_POSITIVE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn unconstrained_quadratic_hits_centre() {
        let c = [0.3, -0.7, 1.1];
        let f = move |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..3 {
                g[i] = 2.0 * (x[i] - c[i]);
                v += (x[i] - c[i]).powi(2);
            }
            v
        };
        let p = NlpProblem::new(f, vec![0.0; 3]).with_bounds(vec![-2.0; 3], vec![2.0; 3]);
        let r = solve(&p, &SolveOptions::default()).unwrap();
        assert!(r.converged);
        for i in 0..3 {
            assert!((r.x_star[i] - c[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn symmetric_equality_qp() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * x[0];
            g[1] = 2.0 * x[1];
            x[0] * x[0] + x[1] * x[1]
        };
        let p = NlpProblem::new(f, vec![3.0, -1.0])
            .with_equalities(vec![LinearEquality::new(vec![(0, 1.0), (1, 1.0)], 1.0)]);
        let r = solve(&p, &SolveOptions::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.x_star[0] - 0.5).abs() < 1e-6 && (r.x_star[1] - 0.5).abs() < 1e-6);
        assert!((r.objective_value - 0.5).abs() < 1e-6);
        assert!(r.merit_monotone());
    }

    #[test]
    fn rosenbrock_on_box() {
        let p = NlpProblem::new(rosenbrock, vec![-1.2, 1.0])
            .with_bounds(vec![-2.0, -2.0], vec![2.0, 2.0]);
        let r = solve(&p, &SolveOptions::default()).unwrap();
        assert!((r.x_star[0] - 1.0).abs() < 1e-4 && (r.x_star[1] - 1.0).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn active_bound_is_respected_exactly() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 5.0);
            g[1] = 2.0 * (x[1] + 5.0);
            (x[0] - 5.0).powi(2) + (x[1] + 5.0).powi(2)
        };
        let p = NlpProblem::new(f, vec![0.0, 0.0]).with_bounds(vec![-1.0, -1.0], vec![1.0, 1.0]);
        let r = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.x_star, vec![1.0, -1.0]);
        assert!(r.converged);
    }

    #[test]
    fn fixed_variables_stay_fixed() {
        let f = |x: &[f64], g: &mut [f64]| {
            g.iter_mut().zip(x).for_each(|(g, x)| *g = 2.0 * x);
            x.iter().map(|v| v * v).sum()
        };
        let p = NlpProblem::new(f, vec![0.0; 3])
            .with_bounds(vec![0.25, -1.0, -1.0], vec![0.25, 1.0, 1.0])
            .with_equalities(vec![LinearEquality::new(vec![(0, 1.0), (1, 1.0), (2, 1.0)], 1.0)]);
        let r = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.x_star[0], 0.25);
        assert!((r.x_star[1] - 0.375).abs() < 1e-6 && (r.x_star[2] - 0.375).abs() < 1e-6);
    }

    #[test]
    fn random_convex_qps_match_kkt_solution() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for trial in 0..5 {
            let n = 4 + 3 * trial;
            let m = 1 + trial;
            let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let h = &b * b.transpose() + DMatrix::identity(n, n);
            let c = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
            let rhs = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));

            let mut kkt = DMatrix::zeros(n + m, n + m);
            kkt.view_mut((0, 0), (n, n)).copy_from(&h);
            kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
            kkt.view_mut((n, 0), (m, n)).copy_from(&a);
            let mut r = DVector::zeros(n + m);
            r.rows_mut(0, n).copy_from(&(-&c));
            r.rows_mut(n, m).copy_from(&rhs);
            let sol = kkt.lu().solve(&r).unwrap();

            let (hh, cc) = (h.clone(), c.clone());
            let f = move |x: &[f64], g: &mut [f64]| {
                let xv = DVector::from_column_slice(x);
                let hx = &hh * &xv;
                g.copy_from_slice((&hx + &cc).as_slice());
                0.5 * xv.dot(&hx) + cc.dot(&xv)
            };
            let eqs = (0..m)
                .map(|j| LinearEquality::new((0..n).map(|i| (i, a[(j, i)])).collect(), rhs[j]))
                .collect();
            let p = NlpProblem::new(f, vec![0.0; n]).with_equalities(eqs);
            let rep = solve(&p, &SolveOptions::default()).unwrap();
            assert!(rep.converged);
            assert!(rep.merit_monotone());
            for i in 0..n {
                assert!((rep.x_star[i] - sol[i]).abs() < 1e-6, "trial {trial}");
            }
        }
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 1.0;
            x[0].ln()
        };
        let p = NlpProblem::new(f, vec![0.0]);
        assert!(matches!(
            solve(&p, &SolveOptions::default()),
            Err(Error::NonFiniteObjective)
        ));
    }

    #[test]
    fn gradient_check_detects_scaling() {
        let p = NlpProblem::new(rosenbrock, vec![0.0; 2]);
        assert!(check_gradient(&p, &[0.3, -0.4], 1e-6) < 1e-6);
        let doubled = |x: &[f64], g: &mut [f64]| {
            let v = rosenbrock(x, g);
            g.iter_mut().for_each(|v| *v *= 2.0);
            v
        };
        let p = NlpProblem::new(doubled, vec![0.0; 2]);
        let e = check_gradient(&p, &[0.3, -0.4], 1e-6);
        assert!((e - 1.0).abs() < 1e-4, "{e}");

        let quad = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * x[0] + x[1];
            g[1] = x[0] + 4.0 * x[1];
            x[0] * x[0] + x[0] * x[1] + 2.0 * x[1] * x[1]
        };
        let p = NlpProblem::new(quad, vec![0.0; 2]);
        assert!(check_gradient(&p, &[1.5, -2.0], 1e-4) < 1e-8);
    }
}
