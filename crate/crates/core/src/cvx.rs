//! Dense convex QCQP solver.
//!
//! Problems have the form
//!
//! ```text
//! minimize    f0(x) = x'Q0 x + c0'x + k0
//! subject to  fi(x) = x'Qi x + ci'x + ki <= 0,   i = 1..m
//!             lower <= x <= upper               (entries may be infinite)
//! ```
//!
//! with every `Qi` positive semidefinite. The solver is a primal log-barrier
//! method with damped Newton centering and a phase-1 stage that searches for
//! a strictly feasible starting point. Everything is dense; the programs this
//! crate produces have at most a few hundred variables.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 200;

/// `x'Qx + c'x + k`. `q` is `None` for affine functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub q: Option<DMatrix<f64>>,
    pub c: DVector<f64>,
    pub k: f64,
}

impl Quadratic {
    pub fn zeros(n: usize) -> Self {
        Self { q: None, c: DVector::zeros(n), k: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn quad_mut(&mut self) -> &mut DMatrix<f64> {
        let n = self.c.len();
        self.q.get_or_insert_with(|| DMatrix::zeros(n, n))
    }

    /// Adds `scale * (g'x)^2`.
    pub fn add_square(&mut self, g: &DVector<f64>, scale: f64) {
        let q = self.quad_mut();
        q.ger(scale, g, g, 1.0);
    }

    pub fn add_square_sparse(&mut self, g: &[(usize, f64)], scale: f64) {
        let q = self.quad_mut();
        for &(i, a) in g {
            for &(j, b) in g {
                q[(i, j)] += scale * a * b;
            }
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let lin = self.c.dot(x) + self.k;
        match &self.q {
            Some(q) => x.dot(&(q * x)) + lin,
            None => lin,
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.q {
            Some(q) => q * x * 2.0 + &self.c,
            None => self.c.clone(),
        }
    }

    fn symmetrize(&mut self) {
        if let Some(q) = &mut self.q {
            let t = q.transpose();
            *q += t;
            *q *= 0.5;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexQcqp {
    pub n: usize,
    pub objective: Quadratic,
    pub constraints: Vec<Quadratic>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// `None` for the objective, `Some(i)` for constraint `i`.
    pub constraint: Option<usize>,
    pub min_eigenvalue: f64,
    pub spectral_norm: f64,
}

impl ConvexQcqp {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            objective: Quadratic::zeros(n),
            constraints: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn minimize(mut self, f: Quadratic) -> Self {
        self.objective = f;
        self
    }

    pub fn subject_to(mut self, f: Quadratic) -> Self {
        self.constraints.push(f);
        self
    }

    pub fn bound(mut self, i: usize, lower: f64, upper: f64) -> Self {
        self.lower[i] = lower;
        self.upper[i] = upper;
        self
    }

    /// Symmetrizes the quadratic forms and rejects anything non-convex or
    /// malformed.
    pub fn build(mut self) -> Result<Self> {
        self.objective.symmetrize();
        self.constraints.iter_mut().for_each(Quadratic::symmetrize);
        for f in std::iter::once(&self.objective).chain(&self.constraints) {
            if f.dim() != self.n || f.q.as_ref().is_some_and(|q| q.nrows() != self.n || q.ncols() != self.n) {
                return Err(Error::DimensionMismatch { expected: self.n, got: f.dim() });
            }
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidParameter(format!("empty bound interval for variable {i}: [{lo}, {hi}]")));
            }
        }
        let violations = validate(&self);
        if let Some(v) = violations.first() {
            return Err(Error::NonConvex(format!(
                "{} quadratic form(s) indefinite; first: {:?} with min eigenvalue {:e}",
                violations.len(),
                v.constraint,
                v.min_eigenvalue
            )));
        }
        Ok(self)
    }

    pub fn inequality_count(&self) -> usize {
        self.constraints.len()
            + self.lower.iter().filter(|v| v.is_finite()).count()
            + self.upper.iter().filter(|v| v.is_finite()).count()
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst = 0.0f64;
        for f in &self.constraints {
            worst = worst.max(f.value(x));
        }
        for i in 0..self.n {
            worst = worst.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        worst
    }
}

/// Reports every quadratic form whose minimum eigenvalue is below
/// `-1e-9 * spectral_norm`.
pub fn validate(problem: &ConvexQcqp) -> Vec<Violation> {
    std::iter::once((None, &problem.objective))
        .chain(problem.constraints.iter().enumerate().map(|(i, f)| (Some(i), f)))
        .filter_map(|(idx, f)| {
            let q = f.q.as_ref()?;
            let sym = (q + q.transpose()) * 0.5;
            let eig = sym.symmetric_eigenvalues();
            let min = eig.min();
            let norm = eig.amax();
            (min < -1e-9 * norm).then_some(Violation { constraint: idx, min_eigenvalue: min, spectral_norm: norm })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub point: DVector<f64>,
    pub objective_value: f64,
    pub kkt_residual: f64,
    /// Newton steps over both phases.
    pub iterations: usize,
    /// Objective value at the end of every centering step.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub mu: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, mu: 20.0 }
    }
}

pub fn solve(problem: &ConvexQcqp, tol: f64, max_iter: usize) -> SolveResult {
    let x0 = default_start(problem);
    solve_from(problem, &x0, &SolverOptions { tol, max_iter, ..Default::default() })
}

fn default_start(problem: &ConvexQcqp) -> DVector<f64> {
    DVector::from_iterator(
        problem.n,
        problem.lower.iter().zip(&problem.upper).map(|(&lo, &hi)| match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi - 1.0,
            (false, false) => 0.0,
        }),
    )
}

/// Pulls `x` strictly inside the box.
fn interior(problem: &ConvexQcqp, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        problem.n,
        (0..problem.n).map(|i| {
            let (lo, hi) = (problem.lower[i], problem.upper[i]);
            let margin = if lo.is_finite() && hi.is_finite() {
                1e-6 * (hi - lo)
            } else {
                1e-6 * (1.0 + x[i].abs())
            };
            let mut v = x[i];
            if lo.is_finite() && v < lo + margin {
                v = lo + margin;
            }
            if hi.is_finite() && v > hi - margin {
                v = hi - margin;
            }
            v
        }),
    )
}

/// Barrier subproblem: minimize `t * f0(x) - sum log(-fi(x)) - box terms`.
///
/// Phase 1 reuses the same machinery with an extra slack variable `s`
/// appended and constraints `fi(x) - s <= 0`.
struct Barrier<'a> {
    problem: &'a ConvexQcqp,
    phase_one: bool,
}

impl Barrier<'_> {
    fn dim(&self) -> usize {
        self.problem.n + usize::from(self.phase_one)
    }

    fn split<'x>(&self, z: &'x DVector<f64>) -> (DVector<f64>, f64) {
        if self.phase_one {
            (z.rows(0, self.problem.n).into_owned(), z[self.problem.n])
        } else {
            (z.clone(), 0.0)
        }
    }

    fn objective(&self, z: &DVector<f64>) -> f64 {
        if self.phase_one {
            z[self.problem.n]
        } else {
            self.problem.objective.value(z)
        }
    }

    fn slacks(&self, z: &DVector<f64>) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (x, s) = self.split(z);
        let p = self.problem;
        let mut cons = Vec::with_capacity(p.constraints.len());
        for f in &p.constraints {
            let v = s - f.value(&x);
            if !(v > 0.0) {
                return None;
            }
            cons.push(v);
        }
        let mut lo = vec![f64::INFINITY; p.n];
        let mut hi = vec![f64::INFINITY; p.n];
        for i in 0..p.n {
            if p.lower[i].is_finite() {
                lo[i] = x[i] - p.lower[i];
                if !(lo[i] > 0.0) {
                    return None;
                }
            }
            if p.upper[i].is_finite() {
                hi[i] = p.upper[i] - x[i];
                if !(hi[i] > 0.0) {
                    return None;
                }
            }
        }
        Some((cons, lo, hi))
    }

    fn value(&self, t: f64, z: &DVector<f64>) -> Option<f64> {
        let (cons, lo, hi) = self.slacks(z)?;
        let log_sum: f64 = cons
            .iter()
            .chain(lo.iter().filter(|v| v.is_finite()))
            .chain(hi.iter().filter(|v| v.is_finite()))
            .map(|v| v.ln())
            .sum();
        Some(t * self.objective(z) - log_sum)
    }

    /// Gradient and Hessian of the barrier function, plus the slacks.
    fn derivatives(&self, t: f64, z: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>, Vec<f64>) {
        let p = self.problem;
        let n = p.n;
        let dim = self.dim();
        let (x, _) = self.split(z);
        let (cons, lo, hi) = self.slacks(z).expect("derivatives requested at an infeasible point");
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);

        if self.phase_one {
            g[n] = t;
        } else {
            g.rows_mut(0, n).axpy(t, &p.objective.gradient(&x), 1.0);
            if let Some(q) = &p.objective.q {
                add_scaled(&mut h, q, 2.0 * t);
            }
        }

        for (f, &slack) in p.constraints.iter().zip(&cons) {
            let mut grad = DVector::zeros(dim);
            grad.rows_mut(0, n).copy_from(&f.gradient(&x));
            if self.phase_one {
                grad[n] = -1.0;
            }
            g.axpy(1.0 / slack, &grad, 1.0);
            if let Some(q) = &f.q {
                add_scaled(&mut h, q, 2.0 / slack);
            }
            h.ger(1.0 / (slack * slack), &grad, &grad, 1.0);
        }

        for i in 0..n {
            if lo[i].is_finite() {
                g[i] -= 1.0 / lo[i];
                h[(i, i)] += 1.0 / (lo[i] * lo[i]);
            }
            if hi[i].is_finite() {
                g[i] += 1.0 / hi[i];
                h[(i, i)] += 1.0 / (hi[i] * hi[i]);
            }
        }
        (g, h, cons)
    }
}

/// `h[..n, ..n] += scale * q`.
fn add_scaled(h: &mut DMatrix<f64>, q: &DMatrix<f64>, scale: f64) {
    let n = q.nrows();
    for j in 0..n {
        for i in 0..n {
            h[(i, j)] += scale * q[(i, j)];
        }
    }
}

fn newton_direction(g: &DVector<f64>, h: DMatrix<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut hr = h.clone();
        if reg > 0.0 {
            for i in 0..hr.nrows() {
                hr[(i, i)] += reg;
            }
        }
        if let Some(chol) = hr.cholesky() {
            let d = chol.solve(&(-g));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    None
}

enum Centering {
    Converged,
    Stalled,
    Budget,
    /// Phase 1 only: a strictly feasible point was reached.
    Feasible,
}

/// Damped Newton on the barrier function at fixed `t`.
fn center(barrier: &Barrier, t: f64, z: &mut DVector<f64>, used: &mut usize, budget: usize) -> Centering {
    const DECREMENT_TOL: f64 = 1e-11;
    loop {
        if barrier.phase_one && z[barrier.problem.n] < 0.0 {
            return Centering::Feasible;
        }
        if *used >= budget {
            return Centering::Budget;
        }
        let (g, h, _) = barrier.derivatives(t, z);
        let Some(dz) = newton_direction(&g, h) else {
            return Centering::Stalled;
        };
        let decrement = -g.dot(&dz);
        *used += 1;
        let f0 = barrier.value(t, z).expect("iterate left the domain");
        // below the rounding level of the barrier value no line search can
        // make progress, so the full step is taken and centering stops
        if decrement / 2.0 <= DECREMENT_TOL.max(16.0 * f64::EPSILON * f0.abs()) {
            let cand = &*z + &dz;
            if barrier.value(t, &cand).is_some() {
                *z = cand;
            }
            return Centering::Converged;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &*z + &dz * step;
            if let Some(f) = barrier.value(t, &cand) {
                if f <= f0 - 0.25 * step * decrement {
                    *z = cand;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            return Centering::Stalled;
        }
    }
}

/// Solves from a caller-supplied start; the start is pulled inside the box
/// and phase 1 runs only if it violates a quadratic constraint.
pub fn solve_from(problem: &ConvexQcqp, x0: &DVector<f64>, opts: &SolverOptions) -> SolveResult {
    let mut x = interior(problem, x0);
    let mut used = 0usize;

    let max_cons = problem.constraints.iter().map(|f| f.value(&x)).fold(f64::NEG_INFINITY, f64::max);
    if max_cons >= 0.0 {
        match phase_one(problem, &x, opts, &mut used) {
            Some(feasible) => x = feasible,
            None => {
                let objective_value = problem.objective.value(&x);
                return SolveResult {
                    status: SolveStatus::Infeasible,
                    point: x,
                    objective_value,
                    kkt_residual: f64::INFINITY,
                    iterations: used,
                    history: Vec::new(),
                };
            }
        }
    }

    let barrier = Barrier { problem, phase_one: false };
    let m = problem.inequality_count().max(1) as f64;
    let mut t = 1.0;
    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let budget = used + opts.max_iter;
    loop {
        let outcome = center(&barrier, t, &mut x, &mut used, budget);
        history.push(problem.objective.value(&x));
        match outcome {
            Centering::Budget => break,
            Centering::Converged | Centering::Stalled | Centering::Feasible => {}
        }
        if m / t <= opts.tol {
            status = SolveStatus::Optimal;
            break;
        }
        t *= opts.mu;
    }

    let kkt_residual = kkt_residual(problem, &x, t);
    if status == SolveStatus::Optimal && kkt_residual > opts.tol {
        status = SolveStatus::MaxIterations;
    }
    SolveResult {
        status,
        objective_value: problem.objective.value(&x),
        point: x,
        kkt_residual,
        iterations: used,
        history,
    }
}

/// Minimizes `s` subject to `fi(x) <= s` until `s` turns negative.
fn phase_one(problem: &ConvexQcqp, x: &DVector<f64>, opts: &SolverOptions, used: &mut usize) -> Option<DVector<f64>> {
    let barrier = Barrier { problem, phase_one: true };
    let worst = problem.constraints.iter().map(|f| f.value(x)).fold(f64::NEG_INFINITY, f64::max);
    let mut z = DVector::zeros(problem.n + 1);
    z.rows_mut(0, problem.n).copy_from(x);
    z[problem.n] = worst + 1.0 + worst.abs();
    let m = (problem.inequality_count() as f64).max(1.0);
    let mut t = 1.0 / (1.0 + worst.abs());
    let budget = *used + opts.max_iter;
    let mut last = f64::INFINITY;
    loop {
        match center(&barrier, t, &mut z, used, budget) {
            Centering::Feasible => {
                let x = z.rows(0, problem.n).into_owned();
                let strict = problem.constraints.iter().all(|f| f.value(&x) < 0.0);
                return strict.then_some(x);
            }
            Centering::Budget => return None,
            Centering::Converged | Centering::Stalled => {}
        }
        let s = z[problem.n];
        // optimal s is within m/t of the current value; nonnegative means no
        // strictly feasible point exists
        if s - m / t >= 0.0 || (m / t < 1e-14 * (1.0 + s.abs()) && s >= 0.0) {
            return None;
        }
        if (last - s).abs() <= 1e-15 * (1.0 + s.abs()) && m / t < opts.tol * 1e-3 {
            return None;
        }
        last = s;
        t *= opts.mu;
    }
}

/// Largest of the duality-gap bound and the relative stationarity residual.
///
/// Dual estimates come from the central path, corrected to first order by
/// one Newton step so that inexact centering does not dominate the residual.
fn kkt_residual(problem: &ConvexQcqp, x: &DVector<f64>, t: f64) -> f64 {
    let gap = problem.inequality_count() as f64 / t;
    let barrier = Barrier { problem, phase_one: false };
    let dx = match barrier.slacks(x) {
        Some(_) => {
            let (g, h, _) = barrier.derivatives(t, x);
            newton_direction(&g, h).unwrap_or_else(|| DVector::zeros(problem.n))
        }
        None => DVector::zeros(problem.n),
    };
    let grad0 = problem.objective.gradient(x);
    // residual is measured against the largest term in the sum
    let mut scale = 1.0 + grad0.amax();
    let mut r = grad0;
    let mut add = |r: &mut DVector<f64>, grad: DVector<f64>, slack: f64, rate: f64| {
        let lambda = ((1.0 - rate / slack) / (t * slack)).max(0.0);
        let term = grad * lambda;
        scale = scale.max(term.amax());
        *r += term;
    };
    for f in &problem.constraints {
        let grad = f.gradient(x);
        let rate = -grad.dot(&dx);
        add(&mut r, grad, -f.value(x), rate);
    }
    for i in 0..problem.n {
        let mut e = DVector::zeros(problem.n);
        if problem.lower[i].is_finite() {
            e[i] = -1.0;
            add(&mut r, e.clone(), x[i] - problem.lower[i], dx[i]);
        }
        if problem.upper[i].is_finite() {
            e[i] = 1.0;
            add(&mut r, e, problem.upper[i] - x[i], -dx[i]);
        }
    }
    gap.max(r.amax() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quad(q: &[f64], c: &[f64], k: f64) -> Quadratic {
        let n = c.len();
        Quadratic { q: Some(DMatrix::from_row_slice(n, n, q)), c: DVector::from_row_slice(c), k }
    }

    #[test]
    fn active_bound() {
        // minimize x^2 s.t. x >= 1
        let p = ConvexQcqp::new(1).minimize(quad(&[1.0], &[0.0], 0.0)).bound(0, 1.0, f64::INFINITY).build().unwrap();
        let r = solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.point[0] - 1.0).abs() < 1e-6);
        assert!((r.objective_value - 1.0).abs() < 1e-6);
        assert!(r.point[0] >= 1.0);
    }

    #[test]
    fn circle() {
        // minimize -x-y s.t. x^2+y^2 <= 2
        let p = ConvexQcqp::new(2)
            .minimize(Quadratic { q: None, c: DVector::from_row_slice(&[-1.0, -1.0]), k: 0.0 })
            .subject_to(quad(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], -2.0))
            .bound(0, -10.0, 10.0)
            .bound(1, -10.0, 10.0)
            .build()
            .unwrap();
        let r = solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.objective_value, -2.0, epsilon = 1e-6);
        assert_relative_eq!(r.point[0], 1.0, epsilon = 1e-4);
        assert_relative_eq!(r.point[1], 1.0, epsilon = 1e-4);
        assert!(r.kkt_residual <= DEFAULT_TOL);
        assert!(p.max_violation(&r.point) <= 0.0);
    }

    #[test]
    fn infeasible_program() {
        // x^2 <= -1 has no solution
        let p = ConvexQcqp::new(1).subject_to(quad(&[1.0], &[0.0], 1.0)).bound(0, -5.0, 5.0).build().unwrap();
        assert_eq!(solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).status, SolveStatus::Infeasible);
        // touching but no interior: x^2 <= 0
        let p = ConvexQcqp::new(1).subject_to(quad(&[1.0], &[0.0], 0.0)).bound(0, -5.0, 5.0).build().unwrap();
        assert_eq!(solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).status, SolveStatus::Infeasible);
    }

    #[test]
    fn validation() {
        let ok = ConvexQcqp::new(2).minimize(quad(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], 0.0));
        assert!(validate(&ok).is_empty());
        let bad = ConvexQcqp::new(2).subject_to(quad(&[-1.0, 0.0, 0.0, -1.0], &[0.0, 0.0], 0.0));
        let v = validate(&bad);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].constraint, Some(0));
        assert!(matches!(bad.build(), Err(Error::NonConvex(_))));
        assert!(ConvexQcqp::new(1).bound(0, 1.0, 1.0).build().is_err());
    }

    #[test]
    fn phase_one_from_infeasible_start() {
        // (x-3)^2 + y^2 <= 1 starting from the origin
        let p = ConvexQcqp::new(2)
            .minimize(quad(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], 0.0))
            .subject_to(quad(&[1.0, 0.0, 0.0, 1.0], &[-6.0, 0.0], 8.0))
            .build()
            .unwrap();
        let r = solve_from(&p, &DVector::zeros(2), &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal, "{r:?}");
        assert_relative_eq!(r.point[0], 2.0, epsilon = 1e-5);
        assert_relative_eq!(r.objective_value, 4.0, epsilon = 1e-6);
    }

    #[test]
    fn central_path_objective_is_monotone() {
        let p = ConvexQcqp::new(2)
            .minimize(quad(&[2.0, 0.5, 0.5, 1.0], &[-3.0, 1.0], 0.0))
            .subject_to(quad(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], -1.0))
            .bound(0, -1.0, 0.5)
            .build()
            .unwrap();
        let r = solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER);
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "{:?}", r.history);
        }
    }

    #[test]
    fn deterministic() {
        let p = ConvexQcqp::new(2)
            .minimize(quad(&[2.0, 0.5, 0.5, 1.0], &[-3.0, 1.0], 0.0))
            .subject_to(quad(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], -1.0))
            .build()
            .unwrap();
        let a = solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER);
        let b = solve(&p, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(a.point.as_slice(), b.point.as_slice());
        assert_eq!(a.history, b.history);
    }
}
