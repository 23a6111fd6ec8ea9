//! UAV placement for a fixed precoder by successive convex approximation.
//!
//! With free-space path loss every user sees the aligned channel
//! `d^-1 * 1`, so a stream's SINR at user `k` is
//! `S / (I + sigma2 * d_k^2)` with `S = |1'p|^2` and `I` the aligned power of
//! the streams still interfering. The rate is convex in `d_k^2`, hence its
//! tangent in `d_k^2` is a global lower bound and the per-iteration program
//! is a convex QCQP in `(q, eta)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::channel::Position3D;
use crate::cvx::{self, ConvexQcqp, Quadratic, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::signal::{Precoder, RateSplit};
use crate::trace::{RunTrace, StepStatus, TraceRecord};

const LOG2_E: f64 = std::f64::consts::LOG2_E;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl PlacementBox {
    pub fn new(x: (f64, f64), y: (f64, f64), z: (f64, f64)) -> Result<Self> {
        let b = PlacementBox { x_min: x.0, x_max: x.1, y_min: y.0, y_max: y.1, z_min: z.0, z_max: z.1 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let axes = [(self.x_min, self.x_max, "x"), (self.y_min, self.y_max, "y"), (self.z_min, self.z_max, "z")];
        for (lo, hi, name) in axes {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParameter(format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        if !(self.z_min > 0.0) {
            return Err(Error::InvalidParameter("minimum altitude must be positive".into()));
        }
        Ok(())
    }

    pub fn lower(&self) -> [f64; 3] {
        [self.x_min, self.y_min, self.z_min]
    }

    pub fn upper(&self) -> [f64; 3] {
        [self.x_max, self.y_max, self.z_max]
    }

    pub fn contains(&self, q: &Position3D) -> bool {
        (self.x_min..=self.x_max).contains(&q.x)
            && (self.y_min..=self.y_max).contains(&q.y)
            && (self.z_min..=self.z_max).contains(&q.z)
    }

    pub fn corners(&self) -> impl Iterator<Item = Position3D> + '_ {
        (0..8).map(move |i| {
            Position3D::new(
                if i & 1 == 0 { self.x_min } else { self.x_max },
                if i & 2 == 0 { self.y_min } else { self.y_max },
                if i & 4 == 0 { self.z_min } else { self.z_max },
            )
        })
    }

    /// Largest squared distance from `p` to any point of the box.
    pub fn max_squared_distance(&self, p: &Position3D) -> f64 {
        self.corners().map(|c| c.squared_distance(p)).fold(0.0, f64::max)
    }

    /// Horizontal centroid of `users` at altitude `z_min`, clamped into the box.
    pub fn centroid_at_floor(&self, users: &[Position3D]) -> Position3D {
        let n = users.len().max(1) as f64;
        let x = users.iter().map(|u| u.x).sum::<f64>() / n;
        let y = users.iter().map(|u| u.y).sum::<f64>() / n;
        Position3D::new(x.clamp(self.x_min, self.x_max), y.clamp(self.y_min, self.y_max), self.z_min)
    }

    /// Centroid horizontally, midway between the altitude limits.
    pub fn average_location(&self, users: &[Position3D]) -> Position3D {
        Position3D { z: 0.5 * (self.z_min + self.z_max), ..self.centroid_at_floor(users) }
    }
}

/// Tangent coefficients of the private rates in the squared distance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaCoefficients {
    /// Negative slope of the rate in `d^2` (bits/s/Hz per m^2).
    pub a: Vec<f64>,
    /// Rate at the expansion point (bits/s/Hz).
    pub b: Vec<f64>,
    pub expansion_distances: Vec<f64>,
}

/// `Lambda_k = 2^(R_th,k - r_k) - 1`; entries `<= 0` mean the threshold is
/// already met by the common portion alone.
#[derive(Debug, Clone, PartialEq)]
pub struct QosData {
    pub lambdas: Vec<f64>,
}

impl QosData {
    pub fn new(split: &RateSplit, thresholds: &[f64]) -> Self {
        let lambdas = thresholds
            .iter()
            .zip(&split.common_portions)
            .map(|(th, r)| (th - r).exp2() - 1.0)
            .collect();
        QosData { lambdas }
    }

    pub fn is_vacuous(&self, k: usize) -> bool {
        self.lambdas[k] <= 0.0
    }
}

/// Tangent of `log2(1 + s / (i + sigma2 * D))` in `D` at `D = d^2`.
/// Returns `(a, b)` with `rate(D) >= b - a * (D - d^2)`.
fn tangent(s: f64, i: f64, sigma2: f64, d2: f64) -> (f64, f64) {
    let base = i + sigma2 * d2;
    if s <= 0.0 {
        return (0.0, 0.0);
    }
    let a = LOG2_E * sigma2 * s / (base * (base + s));
    (a, (s / base).ln_1p() * LOG2_E)
}

/// Coefficients of the private-rate bounds at `q_l`.
pub fn sca_coefficients(q_l: &Position3D, precoder: &Precoder, users: &[Position3D], sigma2: f64) -> Result<ScaCoefficients> {
    let k = users.len();
    if precoder.users() != k {
        return Err(Error::DimensionMismatch { expected: k, got: precoder.users() });
    }
    let gains: Vec<f64> = (1..=k).map(|i| precoder.aligned_gain(i)).collect();
    let total: f64 = gains.iter().sum();
    let mut out = ScaCoefficients { a: Vec::with_capacity(k), b: Vec::with_capacity(k), expansion_distances: Vec::with_capacity(k) };
    for (user, s) in users.iter().zip(&gains) {
        let d2 = q_l.squared_distance(user);
        if !(d2 > 0.0) {
            return Err(Error::DegenerateGeometry);
        }
        let (a, b) = tangent(*s, total - s, sigma2, d2);
        out.a.push(a);
        out.b.push(b);
        out.expansion_distances.push(d2.sqrt());
    }
    Ok(out)
}

/// `-A_k (d_k^2 - d_k,l^2) + B_k` at `q` for the user at `user`.
pub fn rate_lower_bound(q: &Position3D, user: &Position3D, coeffs: &ScaCoefficients, k: usize) -> f64 {
    let d_l = coeffs.expansion_distances[k];
    -coeffs.a[k] * (q.squared_distance(user) - d_l * d_l) + coeffs.b[k]
}

/// How the streams are decoded, which fixes the rate expressions.
#[derive(Debug, Clone, Copy)]
pub enum Decoding<'a> {
    /// Common stream (possibly empty) decoded first, then the own private stream.
    Split(&'a RateSplit),
    /// Superposition coding: position `j` of the order is decoded by every user
    /// at positions `j..`.
    Sic(&'a [usize]),
}

/// Fixed data of the placement subproblem.
#[derive(Debug, Clone, Copy)]
pub struct PlacementScenario<'a> {
    pub users: &'a [Position3D],
    pub weights: &'a [f64],
    pub sigma2: f64,
    /// Path-loss exponent; the quadratic surrogate needs free-space loss.
    pub beta: f64,
    pub bounds: PlacementBox,
    /// bits/s/Hz
    pub rate_thresholds: &'a [f64],
}

impl PlacementScenario<'_> {
    fn validate(&self, precoder: &Precoder) -> Result<()> {
        let k = self.users.len();
        if k == 0 {
            return Err(Error::InvalidParameter("at least one user is required".into()));
        }
        if self.beta != 2.0 {
            return Err(Error::InvalidParameter(format!(
                "placement needs path-loss exponent 2, got {}",
                self.beta
            )));
        }
        for len in [self.weights.len(), self.rate_thresholds.len(), precoder.users()] {
            if len != k {
                return Err(Error::DimensionMismatch { expected: k, got: len });
            }
        }
        self.bounds.validate()
    }
}

/// One rate bound `eta[slot] <= rate of a stream seen at user `at``.
#[derive(Debug, Clone, Copy)]
struct RateTerm {
    slot: usize,
    at: usize,
    signal: f64,
    interference: f64,
}

fn rate_terms(precoder: &Precoder, decoding: Decoding) -> Vec<RateTerm> {
    let k = precoder.users();
    let gains: Vec<f64> = (1..=k).map(|i| precoder.aligned_gain(i)).collect();
    match decoding {
        Decoding::Split(_) => {
            let total: f64 = gains.iter().sum();
            (0..k)
                .map(|u| RateTerm { slot: u, at: u, signal: gains[u], interference: total - gains[u] })
                .collect()
        }
        Decoding::Sic(order) => {
            let mut terms = Vec::new();
            for pos in 0..k {
                let interference: f64 = order[pos + 1..].iter().map(|&i| gains[i]).sum();
                for &at in &order[pos..] {
                    terms.push(RateTerm { slot: order[pos], at, signal: gains[order[pos]], interference });
                }
            }
            terms
        }
    }
}

fn term_rate(t: &RateTerm, q: &Position3D, users: &[Position3D], sigma2: f64) -> f64 {
    let d2 = q.squared_distance(&users[t.at]);
    if t.signal <= 0.0 {
        return 0.0;
    }
    (t.signal / (t.interference + sigma2 * d2)).ln_1p() * LOG2_E
}

/// Per-user rates at `q` under free-space loss; `None` when the split is not
/// decodable there.
pub fn rates_at(q: &Position3D, precoder: &Precoder, decoding: Decoding, users: &[Position3D], sigma2: f64) -> Vec<f64> {
    let k = users.len();
    let mut rates = vec![f64::INFINITY; k];
    for t in rate_terms(precoder, decoding) {
        rates[t.slot] = rates[t.slot].min(term_rate(&t, q, users, sigma2));
    }
    if let Decoding::Split(split) = decoding {
        for (r, c) in rates.iter_mut().zip(&split.common_portions) {
            *r += c;
        }
    }
    rates
}

/// Common-rate cap at `q` under free-space loss.
pub fn common_cap_at(q: &Position3D, precoder: &Precoder, users: &[Position3D], sigma2: f64) -> f64 {
    let s0 = precoder.aligned_gain(0);
    let rest: f64 = (1..=precoder.users()).map(|i| precoder.aligned_gain(i)).sum();
    users
        .iter()
        .map(|u| (s0 / (rest + sigma2 * q.squared_distance(u))).ln_1p() * LOG2_E)
        .fold(f64::INFINITY, f64::min)
}

/// Weighted sum rate at `q` with the decoding held fixed.
pub fn wsr_at(q: &Position3D, precoder: &Precoder, decoding: Decoding, scenario: &PlacementScenario) -> f64 {
    rates_at(q, precoder, decoding, scenario.users, scenario.sigma2)
        .iter()
        .zip(scenario.weights)
        .map(|(r, w)| w * r)
        .sum()
}

/// The convex program solved at one SCA iteration, with the variable
/// vector `[x, y, z, eta_1..eta_K]`.
#[derive(Debug, Clone)]
pub struct P3Program {
    pub program: ConvexQcqp,
    pub coefficients: ScaCoefficients,
    pub qos: QosData,
    /// Number of distance balls from rate thresholds.
    pub qos_constraints: usize,
    /// Number of distance balls that keep the common rate decodable.
    pub common_constraints: usize,
    expansion: Position3D,
    terms: Vec<(RateTerm, f64, f64)>,
}

impl P3Program {
    pub fn variable_count(&self) -> usize {
        self.program.n
    }

    /// Constraint count with the box counted as three, as in the usual
    /// complexity statement: rate bounds, QoS balls and the box.
    pub fn reported_constraint_count(&self) -> usize {
        self.program.n - 3 + self.qos_constraints + 3
    }

    fn start(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.program.n);
        x[0] = self.expansion.x;
        x[1] = self.expansion.y;
        x[2] = self.expansion.z;
        for slot in 3..self.program.n {
            x[slot] = f64::INFINITY;
        }
        for (t, _, b) in &self.terms {
            x[3 + t.slot] = x[3 + t.slot].min(b - 0.5);
        }
        for i in 3..self.program.n {
            if !x[i].is_finite() {
                x[i] = 0.0;
            }
        }
        x
    }
}

/// `scale * ||q - p||^2 + linear eta part + k` in the P3 variables.
fn distance_form(n: usize, p: &Position3D, scale: f64) -> Quadratic {
    let mut f = Quadratic::zeros(n);
    let q = f.quad_mut();
    for i in 0..3 {
        q[(i, i)] = scale;
    }
    let c = p.to_array();
    for i in 0..3 {
        f.c[i] = -2.0 * scale * c[i];
    }
    f.k = scale * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
    f
}

/// Ball `||q - center||^2 <= radius2`, or an error when it is empty.
fn ball(n: usize, center: &Position3D, radius2: f64, user: usize) -> Result<Quadratic> {
    if radius2 < 0.0 || radius2.is_nan() {
        return Err(Error::EmptyQosRegion { user: user + 1 });
    }
    let mut f = distance_form(n, center, 1.0);
    f.k -= radius2;
    Ok(f)
}

/// Builds the convex surrogate at `q_l`:
///
/// ```text
/// maximize    sum_k w_k eta_k
/// subject to  eta_k <= B_k - A_k (||q - q_k||^2 - d_k^2)
///             ||q - q_k||^2 <= (|1'p_k|^2 / Lambda_k - sum_{i!=k} |1'p_i|^2) / sigma2   (Lambda_k > 0)
///             q in the placement box
/// ```
///
/// For a split with a positive common part, balls that keep the common rate
/// at least `sum r` at every user are added, so the split stays decodable.
/// For SIC decoding each stream gets one bound per decoding user.
pub fn build_p3(q_l: &Position3D, precoder: &Precoder, decoding: Decoding, scenario: &PlacementScenario) -> Result<P3Program> {
    scenario.validate(precoder)?;
    let k = scenario.users.len();
    let n = 3 + k;
    let sigma2 = scenario.sigma2;
    let coefficients = sca_coefficients(q_l, precoder, scenario.users, sigma2)?;

    let mut objective = Quadratic::zeros(n);
    for (slot, w) in scenario.weights.iter().enumerate() {
        objective.c[3 + slot] = -w;
    }
    let mut program = ConvexQcqp::new(n).minimize(objective);

    let mut terms = Vec::new();
    let mut eta_floor = vec![f64::INFINITY; k];
    for t in rate_terms(precoder, decoding) {
        let user = &scenario.users[t.at];
        let d2 = q_l.squared_distance(user);
        if !(d2 > 0.0) {
            return Err(Error::DegenerateGeometry);
        }
        let (a, b) = tangent(t.signal, t.interference, sigma2, d2);
        let mut f = distance_form(n, user, a);
        f.c[3 + t.slot] += 1.0;
        f.k -= a * d2 + b;
        program = program.subject_to(f);
        let worst = b - a * (scenario.bounds.max_squared_distance(user) - d2);
        eta_floor[t.slot] = eta_floor[t.slot].min(worst - 1.0);
        terms.push((t, a, b));
    }

    let gains: Vec<f64> = (0..=k).map(|i| precoder.aligned_gain(i)).collect();
    let private_total: f64 = gains[1..].iter().sum();
    let mut qos_constraints = 0;
    let qos = match decoding {
        Decoding::Split(split) => QosData::new(split, scenario.rate_thresholds),
        Decoding::Sic(_) => QosData::new(&RateSplit::zeros(k), scenario.rate_thresholds),
    };
    match decoding {
        Decoding::Split(_) => {
            for (u, user) in scenario.users.iter().enumerate() {
                if qos.is_vacuous(u) || scenario.rate_thresholds[u] <= 0.0 {
                    continue;
                }
                let radius2 = (gains[u + 1] / qos.lambdas[u] - (private_total - gains[u + 1])) / sigma2;
                program = program.subject_to(ball(n, user, radius2, u)?);
                qos_constraints += 1;
            }
        }
        Decoding::Sic(order) => {
            for (pos, &u) in order.iter().enumerate() {
                if qos.is_vacuous(u) || scenario.rate_thresholds[u] <= 0.0 {
                    continue;
                }
                let interference: f64 = order[pos + 1..].iter().map(|&i| gains[i + 1]).sum();
                let radius2 = (gains[u + 1] / qos.lambdas[u] - interference) / sigma2;
                for &at in &order[pos..] {
                    program = program.subject_to(ball(n, &scenario.users[at], radius2, u)?);
                    qos_constraints += 1;
                }
            }
        }
    }

    let mut common_constraints = 0;
    if let Decoding::Split(split) = decoding {
        let total = split.total();
        if total > 0.0 {
            let radius2 = (gains[0] / total.exp_m1_2() - private_total) / sigma2;
            for (u, user) in scenario.users.iter().enumerate() {
                program = program.subject_to(ball(n, user, radius2, u)?);
                common_constraints += 1;
            }
        }
    }

    let (lo, hi) = (scenario.bounds.lower(), scenario.bounds.upper());
    for i in 0..3 {
        program = program.bound(i, lo[i], hi[i]);
    }
    for (slot, floor) in eta_floor.iter().enumerate() {
        let floor = if floor.is_finite() { *floor } else { -1.0 };
        program = program.bound(3 + slot, floor, f64::INFINITY);
    }

    Ok(P3Program {
        program: program.build()?,
        coefficients,
        qos,
        qos_constraints,
        common_constraints,
        expansion: *q_l,
        terms,
    })
}

/// `2^x - 1`, accurate for small `x`.
trait ExpM1Base2 {
    fn exp_m1_2(self) -> f64;
}

impl ExpM1Base2 for f64 {
    fn exp_m1_2(self) -> f64 {
        (self * std::f64::consts::LN_2).exp_m1()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlacementParams {
    /// Stop when the true objective improves by at most this (bits/s/Hz).
    pub epsilon: f64,
    pub max_iterations: usize,
    pub solver: SolverOptions,
}

impl Default for PlacementParams {
    fn default() -> Self {
        Self { epsilon: 1e-4, max_iterations: 50, solver: SolverOptions { tol: 1e-6, max_iter: 2000, ..Default::default() } }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementOutcome {
    pub position: Position3D,
    /// WSR at `position` with the decoding held fixed.
    pub wsr: f64,
    pub trace: RunTrace,
    pub status: StepStatus,
    pub converged: bool,
}

/// SCA over the UAV position. Each iterate solves the surrogate built at the
/// previous one; the true WSR is non-decreasing because the surrogate is a
/// tight global lower bound.
pub fn optimize_placement(
    q0: &Position3D,
    precoder: &Precoder,
    decoding: Decoding,
    scenario: &PlacementScenario,
    params: &PlacementParams,
) -> Result<PlacementOutcome> {
    scenario.validate(precoder)?;
    if !scenario.bounds.contains(q0) {
        return Err(Error::InvalidParameter("initial position lies outside the placement box".into()));
    }
    let start = Instant::now();
    let mut q = *q0;
    let mut wsr = wsr_at(&q, precoder, decoding, scenario);
    let mut trace = RunTrace::default();
    let rates = |q: &Position3D| rates_at(q, precoder, decoding, scenario.users, scenario.sigma2);
    trace.push(TraceRecord { iteration: 0, wsr, uav: Some(q), rates: rates(&q), status: StepStatus::Initial, elapsed: start.elapsed() });

    let mut status = StepStatus::MaxIterations;
    let mut converged = false;
    for iteration in 1..=params.max_iterations {
        let p3 = match build_p3(&q, precoder, decoding, scenario) {
            Ok(p) => p,
            Err(Error::EmptyQosRegion { .. }) => {
                status = StepStatus::Infeasible;
                break;
            }
            Err(e) => return Err(e),
        };
        let result = cvx::solve_from(&p3.program, &p3.start(), &params.solver);
        // an inaccurate solve still returns a strictly feasible point, and the
        // ascent check below decides whether it is kept
        if result.status == SolveStatus::Infeasible {
            status = StepStatus::Infeasible;
            break;
        }
        let next = Position3D::new(result.point[0], result.point[1], result.point[2]);
        let next_wsr = wsr_at(&next, precoder, decoding, scenario);
        let delta = next_wsr - wsr;
        if delta < 0.0 {
            // the bound guarantees ascent up to solver accuracy; keep the better point
            converged = crate::trace::settled(delta, wsr, params.epsilon)
                || -delta <= crate::precoder::ROUNDOFF * (1.0 + wsr.abs());
            status = if converged { StepStatus::Converged } else { StepStatus::SolverLimit };
            break;
        }
        q = next;
        wsr = next_wsr;
        let done = crate::trace::settled(delta, wsr - delta, params.epsilon);
        let step_status = if done { StepStatus::Converged } else { StepStatus::Ok };
        trace.push(TraceRecord { iteration, wsr, uav: Some(q), rates: rates(&q), status: step_status, elapsed: start.elapsed() });
        if done {
            converged = true;
            status = StepStatus::Converged;
            break;
        }
    }
    Ok(PlacementOutcome { position: q, wsr, trace, status, converged })
}
