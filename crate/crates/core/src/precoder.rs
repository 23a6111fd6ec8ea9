//! Precoder and rate-split optimization for a fixed UAV position.
//!
//! The non-convex weighted sum-rate problem is handled with the WMMSE
//! reformulation. For fixed precoders the MMSE equalizers and weights have
//! closed forms; for fixed equalizers and weights the augmented weighted MSE
//! problem is a convex QCQP in the precoder (and the common-rate variables),
//! solved by [`crate::cvx`]. Alternating the two steps gives a non-decreasing
//! WSR sequence.
//!
//! The same machinery drives the two baselines: SDMA is the rate-splitting
//! program with the common stream switched off, and NOMA replaces the single
//! common stream by a full superposition-coding chain with SIC at every
//! stronger user.
//!
//! Internally the AWMSE is built on the natural logarithm and rescaled to
//! bits, i.e. `zeta(P) = log2(e) * (u * mse(P) - ln u) + 1 - log2(e)`. At the
//! MMSE point with `u = 1/mse` this equals `u * mse - log2 u = 1 - R`, and
//! away from it it upper-bounds `1 - R(P)`, which is what keeps the
//! alternation monotone.

use std::fmt;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_normal, ChannelVector};
use crate::cvx::{self, ConvexQcqp, Quadratic, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::signal::{self, Precoder, RateReport, RateSplit};
use crate::trace::{RunTrace, StepStatus, TraceRecord};

const LOG2_E: f64 = std::f64::consts::LOG2_E;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rsma,
    Sdma,
    Noma,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Rsma, Scheme::Sdma, Scheme::Noma];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Rsma => "rsma",
            Scheme::Sdma => "sdma",
            Scheme::Noma => "noma",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rsma" => Ok(Scheme::Rsma),
            "sdma" => Ok(Scheme::Sdma),
            "noma" => Ok(Scheme::Noma),
            other => Err(Error::InvalidParameter(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitStrategy {
    /// Matched-filter private beams; for rate splitting 10% of the power goes
    /// to a common beam along the normalized channel sum.
    #[default]
    MatchedFilterSplit,
    RandomSeeded(u64),
}

#[derive(Debug, Clone, Copy)]
pub struct PrecoderOptParams {
    /// Stop when consecutive WSR values differ by at most this (bits/s/Hz).
    pub epsilon: f64,
    pub max_outer_iterations: usize,
    pub init_strategy: InitStrategy,
    pub solver: SolverOptions,
}

impl Default for PrecoderOptParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_outer_iterations: 300,
            init_strategy: InitStrategy::MatchedFilterSplit,
            solver: SolverOptions { tol: 1e-6, max_iter: 2000, ..SolverOptions::default() },
        }
    }
}

/// Everything the precoder step needs for one UAV position.
#[derive(Debug, Clone, Copy)]
pub struct LinkProblem<'a> {
    pub channels: &'a [ChannelVector],
    pub weights: &'a [f64],
    pub power: f64,
    pub sigma2: f64,
    /// Minimum overall rate per user, bits/s/Hz.
    pub rate_thresholds: &'a [f64],
}

impl LinkProblem<'_> {
    pub fn users(&self) -> usize {
        self.channels.len()
    }

    pub fn n_t(&self) -> usize {
        self.channels.first().map_or(0, ChannelVector::n_t)
    }

    fn validate(&self) -> Result<()> {
        let k = self.users();
        if k == 0 {
            return Err(Error::InvalidParameter("at least one user is required".into()));
        }
        if self.weights.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: self.weights.len() });
        }
        if self.rate_thresholds.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: self.rate_thresholds.len() });
        }
        let n = self.n_t();
        if let Some(h) = self.channels.iter().find(|h| h.n_t() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: h.n_t() });
        }
        if !(self.sigma2 > 0.0) || !(self.power >= 0.0) {
            return Err(Error::InvalidParameter("noise power must be positive and power budget nonnegative".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Per-stream MMSE quantities
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Common,
    /// 1-based private stream index.
    Private(usize),
}

/// `(T_common, T_private)`: total received power when decoding the common
/// stream, and after the common stream has been cancelled.
pub fn received_powers(h: &ChannelVector, precoder: &Precoder, sigma2: f64) -> (f64, f64) {
    let private: f64 = precoder.columns[1..].iter().map(|p| h.gain(p)).sum::<f64>() + sigma2;
    (private + h.gain(precoder.common()), private)
}

/// MMSE equalizers `(e_common, e_private)` for user `k` (1-based).
pub fn mmse_equalizers(h: &ChannelVector, precoder: &Precoder, k: usize, sigma2: f64) -> (Complex64, Complex64) {
    let (t_common, t_private) = received_powers(h, precoder, sigma2);
    (
        h.inner(precoder.common()).conj() / t_common,
        h.inner(precoder.private(k)).conj() / t_private,
    )
}

/// `|e|^2 T - 2 Re(e h^H p) + 1` for the given stream and equalizer.
pub fn mse(h: &ChannelVector, precoder: &Precoder, stream: Stream, equalizer: Complex64, sigma2: f64) -> f64 {
    let (t_common, t_private) = received_powers(h, precoder, sigma2);
    let (t, col) = match stream {
        Stream::Common => (t_common, 0),
        Stream::Private(k) => (t_private, k),
    };
    equalizer.norm_sqr() * t - 2.0 * (equalizer * h.inner(&precoder.columns[col])).re + 1.0
}

pub fn awmse(mse: f64, u: f64) -> f64 {
    u * mse - u.log2()
}

/// `u = 1 / mse` for every entry.
pub fn optimal_weights(mmse: &[f64]) -> Result<Vec<f64>> {
    mmse.iter()
        .map(|&e| {
            if e > 0.0 && e.is_finite() {
                Ok(1.0 / e)
            } else {
                Err(Error::Numerical(format!("MMSE value {e} is not positive")))
            }
        })
        .collect()
}

/// Equalizers and weights for every stream of the rate-splitting model.
#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    pub e_common: Vec<Complex64>,
    pub e_private: Vec<Complex64>,
    pub u_common: Vec<f64>,
    pub u_private: Vec<f64>,
}

impl WmmseState {
    pub fn mmse(channels: &[ChannelVector], precoder: &Precoder, sigma2: f64) -> Result<Self> {
        let k = channels.len();
        let mut state = WmmseState {
            e_common: Vec::with_capacity(k),
            e_private: Vec::with_capacity(k),
            u_common: Vec::with_capacity(k),
            u_private: Vec::with_capacity(k),
        };
        for (i, h) in channels.iter().enumerate() {
            let (ec, ep) = mmse_equalizers(h, precoder, i + 1, sigma2);
            let mc = mse(h, precoder, Stream::Common, ec, sigma2);
            let mp = mse(h, precoder, Stream::Private(i + 1), ep, sigma2);
            let u = optimal_weights(&[mc, mp])?;
            state.e_common.push(ec);
            state.e_private.push(ep);
            state.u_common.push(u[0]);
            state.u_private.push(u[1]);
        }
        Ok(state)
    }
}

// ---------------------------------------------------------------------------
// Real lowering of the AWMSE program
// ---------------------------------------------------------------------------

/// One decoded stream: user `user` (0-based) decodes column `signal` while
/// the columns in `active` (which include `signal`) are still present.
#[derive(Debug, Clone)]
struct StreamSpec {
    user: usize,
    signal: usize,
    active: Vec<usize>,
}

impl StreamSpec {
    fn total_power(&self, channels: &[ChannelVector], precoder: &Precoder, sigma2: f64) -> f64 {
        let h = &channels[self.user];
        self.active.iter().map(|&i| h.gain(&precoder.columns[i])).sum::<f64>() + sigma2
    }

    /// MMSE equalizer and weight at `precoder`.
    fn mmse(&self, channels: &[ChannelVector], precoder: &Precoder, sigma2: f64) -> Result<(Complex64, f64)> {
        let t = self.total_power(channels, precoder, sigma2);
        let hp = channels[self.user].inner(&precoder.columns[self.signal]);
        let e = hp.conj() / t;
        let m = e.norm_sqr() * t - 2.0 * (e * hp).re + 1.0;
        Ok((e, optimal_weights(&[m])?[0]))
    }
}

/// Maps precoder columns and auxiliary rate variables onto the real vector.
#[derive(Debug, Clone)]
struct Layout {
    n_t: usize,
    /// Offset of each precoder column, `None` when the column is pinned to zero.
    columns: Vec<Option<usize>>,
    v_offset: usize,
    n_v: usize,
}

impl Layout {
    fn new(n_t: usize, users: usize, with_common: bool, n_v: usize) -> Self {
        let mut next = 0;
        let columns = (0..=users)
            .map(|i| {
                if i == 0 && !with_common {
                    None
                } else {
                    let off = next;
                    next += 2 * n_t;
                    Some(off)
                }
            })
            .collect();
        Layout { n_t, columns, v_offset: next, n_v }
    }

    fn n(&self) -> usize {
        self.v_offset + self.n_v
    }

    fn v(&self, i: usize) -> usize {
        self.v_offset + i
    }

    fn pack(&self, precoder: &Precoder, v: &[f64]) -> DVector<f64> {
        let mut x = DVector::zeros(self.n());
        for (i, off) in self.columns.iter().enumerate() {
            if let Some(off) = off {
                for (j, c) in precoder.columns[i].iter().enumerate() {
                    x[off + j] = c.re;
                    x[off + self.n_t + j] = c.im;
                }
            }
        }
        for (i, val) in v.iter().enumerate() {
            x[self.v(i)] = *val;
        }
        x
    }

    fn unpack(&self, x: &DVector<f64>) -> (Precoder, Vec<f64>) {
        let mut p = Precoder::zeros(self.n_t, self.columns.len() - 1);
        for (i, off) in self.columns.iter().enumerate() {
            if let Some(off) = off {
                for j in 0..self.n_t {
                    p.columns[i][j] = Complex64::new(x[off + j], x[off + self.n_t + j]);
                }
            }
        }
        let v = (0..self.n_v).map(|i| x[self.v(i)]).collect();
        (p, v)
    }

    /// Real vectors `(g1, g2)` with `h^H p = g1'x + i g2'x` over column `col`.
    fn inner_rows(&self, h: &ChannelVector, col: usize) -> Option<(Vec<(usize, f64)>, Vec<(usize, f64)>)> {
        let off = self.columns[col]?;
        let n = self.n_t;
        let mut g1 = Vec::with_capacity(2 * n);
        let mut g2 = Vec::with_capacity(2 * n);
        for (j, hj) in h.coefficients.iter().enumerate() {
            g1.push((off + j, hj.re));
            g1.push((off + n + j, hj.im));
            g2.push((off + j, -hj.im));
            g2.push((off + n + j, hj.re));
        }
        Some((g1, g2))
    }

    fn power_constraint(&self, budget: f64) -> Quadratic {
        let n = self.n();
        let mut f = Quadratic::zeros(n);
        let q = f.quad_mut();
        for off in self.columns.iter().flatten() {
            for j in 0..2 * self.n_t {
                q[(off + j, off + j)] = 1.0;
            }
        }
        f.k = -budget;
        f
    }

    /// Bit-scaled AWMSE of one stream as a convex quadratic in the precoder.
    fn awmse(&self, channels: &[ChannelVector], spec: &StreamSpec, e: Complex64, u: f64, sigma2: f64) -> Quadratic {
        let h = &channels[spec.user];
        let scale = LOG2_E * u;
        let mut f = Quadratic::zeros(self.n());
        for &i in &spec.active {
            if let Some((g1, g2)) = self.inner_rows(h, i) {
                f.add_square_sparse(&g1, scale * e.norm_sqr());
                f.add_square_sparse(&g2, scale * e.norm_sqr());
            }
        }
        if let Some((g1, g2)) = self.inner_rows(h, spec.signal) {
            // -2 Re(e h^H p) = -2 (e_re g1'x - e_im g2'x)
            for (idx, val) in g1 {
                f.c[idx] -= scale * 2.0 * e.re * val;
            }
            for (idx, val) in g2 {
                f.c[idx] += scale * 2.0 * e.im * val;
            }
        }
        f.k = scale * (e.norm_sqr() * sigma2 + 1.0) - LOG2_E * u.ln() + 1.0 - LOG2_E;
        f
    }
}

fn rsma_streams(users: usize) -> (Vec<StreamSpec>, Vec<StreamSpec>) {
    let common = (0..users)
        .map(|k| StreamSpec { user: k, signal: 0, active: (0..=users).collect() })
        .collect();
    let private = (0..users)
        .map(|k| StreamSpec { user: k, signal: k + 1, active: (1..=users).collect() })
        .collect();
    (common, private)
}

/// `(position, decoding user position, spec)` for every SIC decoding step.
fn sic_streams(order: &[usize]) -> Vec<(usize, StreamSpec)> {
    let k = order.len();
    let mut out = Vec::new();
    for pos in 0..k {
        for at in pos..k {
            out.push((
                pos,
                StreamSpec {
                    user: order[at],
                    signal: order[pos] + 1,
                    active: order[pos..].iter().map(|i| i + 1).collect(),
                },
            ));
        }
    }
    out
}

/// Result of one convex AWMSE solve.
#[derive(Debug, Clone)]
pub struct P5Solution {
    pub precoder: Precoder,
    /// Auxiliary rate variables: `v = -r` for rate splitting, `v = -rate`
    /// per user for superposition coding, empty for SDMA.
    pub v: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
}

/// Solves the rate-splitting AWMSE program for fixed equalizers and weights:
///
/// ```text
/// minimize    sum_k w_k (v_k + zeta_k^p(P))
/// subject to  sum_j v_j + 1 >= zeta_k^c(P)          for every k
///             v_k + zeta_k^p(P) <= 1 - R_th,k        for users with R_th,k > 0
///             tr(P P^H) <= P_t,   v <= 0
/// ```
pub fn solve_p5_given_ue(
    problem: &LinkProblem,
    state: &WmmseState,
    warm: Option<(&Precoder, &[f64])>,
    solver: &SolverOptions,
) -> Result<P5Solution> {
    problem.validate()?;
    let k = problem.users();
    if problem.power == 0.0 {
        return Ok(P5Solution {
            precoder: Precoder::zeros(problem.n_t(), k),
            v: vec![0.0; k],
            status: SolveStatus::Optimal,
            objective: 0.0,
        });
    }
    let layout = Layout::new(problem.n_t(), k, true, k);
    let (common, private) = rsma_streams(k);
    let n = layout.n();

    let mut objective = Quadratic::zeros(n);
    let mut program_constraints = Vec::new();
    for user in 0..k {
        let w = problem.weights[user];
        let zp = layout.awmse(problem.channels, &private[user], state.e_private[user], state.u_private[user], problem.sigma2);
        accumulate(&mut objective, &zp, w);
        objective.c[layout.v(user)] += w;

        let mut zc = layout.awmse(problem.channels, &common[user], state.e_common[user], state.u_common[user], problem.sigma2);
        zc.k -= 1.0;
        for j in 0..k {
            zc.c[layout.v(j)] -= 1.0;
        }
        program_constraints.push(zc);

        let threshold = problem.rate_thresholds[user];
        if threshold > 0.0 {
            let mut zt = zp.clone();
            zt.c[layout.v(user)] += 1.0;
            zt.k += threshold - 1.0;
            program_constraints.push(zt);
        }
    }
    program_constraints.push(layout.power_constraint(problem.power));

    let mut program = ConvexQcqp::new(n).minimize(objective);
    for c in program_constraints {
        program = program.subject_to(c);
    }
    for j in 0..k {
        program = program.bound(layout.v(j), f64::NEG_INFINITY, 0.0);
    }
    let program = program.build()?;

    let x0 = match warm {
        Some((p, v)) => layout.pack(&p.scaled(WARM_SHRINK), v),
        None => DVector::zeros(n),
    };
    let result = cvx::solve_from(&program, &x0, solver);
    let (precoder, v) = layout.unpack(&result.point);
    Ok(P5Solution { precoder, v, status: result.status, objective: result.objective_value })
}

/// Relative WSR drop that is attributed to solver round-off.
pub(crate) const ROUNDOFF: f64 = 1e-9;

/// Warm starts are shrunk slightly so they sit strictly inside the power ball.
const WARM_SHRINK: f64 = 0.99995;

fn accumulate(target: &mut Quadratic, f: &Quadratic, scale: f64) {
    if let Some(q) = &f.q {
        let t = target.quad_mut();
        *t += q * scale;
    }
    target.c.axpy(scale, &f.c, 1.0);
    target.k += scale * f.k;
}

fn solve_sdma_step(problem: &LinkProblem, precoder: &Precoder, solver: &SolverOptions) -> Result<P5Solution> {
    let k = problem.users();
    let layout = Layout::new(problem.n_t(), k, false, 0);
    let (_, private) = rsma_streams(k);
    let mut objective = Quadratic::zeros(layout.n());
    let mut program = ConvexQcqp::new(layout.n());
    for user in 0..k {
        let (e, u) = private[user].mmse(problem.channels, precoder, problem.sigma2)?;
        let z = layout.awmse(problem.channels, &private[user], e, u, problem.sigma2);
        accumulate(&mut objective, &z, problem.weights[user]);
        let threshold = problem.rate_thresholds[user];
        if threshold > 0.0 {
            let mut zt = z;
            zt.k += threshold - 1.0;
            program = program.subject_to(zt);
        }
    }
    let program = program
        .minimize(objective)
        .subject_to(layout.power_constraint(problem.power))
        .build()?;
    let x0 = layout.pack(&precoder.scaled(WARM_SHRINK), &[]);
    let result = cvx::solve_from(&program, &x0, solver);
    let (precoder, v) = layout.unpack(&result.point);
    Ok(P5Solution { precoder, v, status: result.status, objective: result.objective_value })
}

fn solve_sic_step(
    problem: &LinkProblem,
    precoder: &Precoder,
    order: &[usize],
    rates: &[f64],
    solver: &SolverOptions,
) -> Result<P5Solution> {
    let k = problem.users();
    let layout = Layout::new(problem.n_t(), k, false, k);
    let mut objective = Quadratic::zeros(layout.n());
    for user in 0..k {
        objective.c[layout.v(user)] = problem.weights[user];
    }
    let mut program = ConvexQcqp::new(layout.n()).minimize(objective);
    for (pos, spec) in sic_streams(order) {
        let (e, u) = spec.mmse(problem.channels, precoder, problem.sigma2)?;
        let mut z = layout.awmse(problem.channels, &spec, e, u, problem.sigma2);
        z.k -= 1.0;
        z.c[layout.v(order[pos])] -= 1.0;
        program = program.subject_to(z);
    }
    program = program.subject_to(layout.power_constraint(problem.power));
    for user in 0..k {
        // v = -rate; the cap keeps the program bounded for zero weights
        let upper = (-problem.rate_thresholds[user]).min(1.0);
        let upper = if problem.rate_thresholds[user] > 0.0 { upper } else { 1.0 };
        program = program.bound(layout.v(user), f64::NEG_INFINITY, upper);
    }
    let program = program.build()?;
    let v0: Vec<f64> = rates.iter().map(|r| -0.998 * r + 1e-9).collect();
    let x0 = layout.pack(&precoder.scaled(WARM_SHRINK), &v0);
    let result = cvx::solve_from(&program, &x0, solver);
    let (precoder, v) = layout.unpack(&result.point);
    Ok(P5Solution { precoder, v, status: result.status, objective: result.objective_value })
}

// ---------------------------------------------------------------------------
// Alternating optimization
// ---------------------------------------------------------------------------

/// Precoder with its rate split (rate splitting) or SIC order (NOMA).
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    pub precoder: Precoder,
    pub split: RateSplit,
    /// SIC decoding order (0-based, weakest first); only for NOMA.
    pub order: Option<Vec<usize>>,
    pub report: RateReport,
    pub trace: RunTrace,
    pub converged: bool,
    pub status: StepStatus,
}

/// Starting point for a warm-started run.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub precoder: Precoder,
    pub split: RateSplit,
    pub order: Option<Vec<usize>>,
}

impl From<&SchemeOutcome> for WarmStart {
    fn from(o: &SchemeOutcome) -> Self {
        WarmStart { precoder: o.precoder.clone(), split: o.split.clone(), order: o.order.clone() }
    }
}

pub fn initial_precoder(problem: &LinkProblem, scheme: Scheme, strategy: InitStrategy) -> Precoder {
    let k = problem.users();
    let n = problem.n_t();
    let pt = problem.power;
    let common_share = if scheme == Scheme::Rsma { 0.1 } else { 0.0 };
    let mut p = Precoder::zeros(n, k);
    match strategy {
        InitStrategy::MatchedFilterSplit => {
            let private_amp = ((1.0 - common_share) * pt / k as f64).sqrt();
            for (i, h) in problem.channels.iter().enumerate() {
                let norm = h.norm_sqr().sqrt();
                if norm > 0.0 {
                    p.columns[i + 1] = h.coefficients.iter().map(|c| c * (private_amp / norm)).collect();
                }
            }
            if common_share > 0.0 {
                let mut sum = vec![Complex64::new(0.0, 0.0); n];
                for h in problem.channels {
                    for (s, c) in sum.iter_mut().zip(&h.coefficients) {
                        *s += c;
                    }
                }
                let mut norm = sum.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                if norm == 0.0 {
                    sum = problem.channels[0].coefficients.clone();
                    norm = problem.channels[0].norm_sqr().sqrt();
                }
                if norm > 0.0 {
                    let amp = (common_share * pt).sqrt();
                    p.columns[0] = sum.iter().map(|c| c * (amp / norm)).collect();
                }
            }
        }
        InitStrategy::RandomSeeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let first = if scheme == Scheme::Rsma { 0 } else { 1 };
            for col in &mut p.columns[first..] {
                col.iter_mut().for_each(|c| *c = complex_normal(&mut rng));
            }
            let power = p.power();
            if power > 0.0 {
                p = p.scaled((pt / power).sqrt());
            }
        }
    }
    p
}

/// Rate report for a scheme. Rate splitting uses `split`; SDMA ignores it;
/// NOMA needs the SIC order.
pub fn evaluate(
    scheme: Scheme,
    problem: &LinkProblem,
    precoder: &Precoder,
    split: &RateSplit,
    order: Option<&[usize]>,
) -> Result<RateReport> {
    match scheme {
        Scheme::Rsma => signal::rate_report(problem.channels, precoder, split, problem.weights, problem.sigma2),
        Scheme::Sdma => signal::rate_report(
            problem.channels,
            &precoder.without_common(),
            &RateSplit::zeros(problem.users()),
            problem.weights,
            problem.sigma2,
        ),
        Scheme::Noma => {
            let order = order.ok_or_else(|| Error::InvalidParameter("NOMA evaluation needs a SIC order".into()))?;
            signal::sic_rate_report(problem.channels, precoder, order, problem.weights, problem.sigma2)
        }
    }
}

/// Runs the WMMSE alternation for `scheme`. With `warm` the run starts from
/// a previous solution (re-using its split when still feasible); otherwise
/// from `params.init_strategy`.
///
/// A cold RSMA run also restarts from the SDMA optimum and, for two users,
/// from the NOMA optimum written as a common stream, and keeps the best. Both
/// are RSMA-feasible, so the result never falls below either baseline.
pub fn optimize(
    scheme: Scheme,
    problem: &LinkProblem,
    params: &PrecoderOptParams,
    warm: Option<&WarmStart>,
) -> Result<SchemeOutcome> {
    let direct = run_from(scheme, problem, params, warm)?;
    if scheme != Scheme::Rsma || warm.is_some() || problem.power == 0.0 {
        return Ok(direct);
    }
    let mut seeds = vec![WarmStart::from(&run_from(Scheme::Sdma, problem, params, None)?)];
    if problem.users() == 2 {
        let noma = run_from(Scheme::Noma, problem, params, None)?;
        let order = noma.order.as_deref().expect("NOMA outcome carries its order");
        let (first, second) = (order[0], order[1]);
        let mut p = Precoder::zeros(problem.n_t(), 2);
        p.columns[0] = noma.precoder.private(first + 1).to_vec();
        p.columns[second + 1] = noma.precoder.private(second + 1).to_vec();
        let mut portions = vec![0.0; 2];
        portions[first] = noma.report.overall_rates[first];
        seeds.push(WarmStart { precoder: p, split: RateSplit { common_portions: portions }, order: None });
    }
    let mut best = direct;
    for seed in &seeds {
        let candidate = run_from(Scheme::Rsma, problem, params, Some(seed))?;
        let rank = |o: &SchemeOutcome| (meets_thresholds(problem, &o.report), o.report.wsr);
        if rank(&candidate) > rank(&best) {
            best = candidate;
        }
    }
    Ok(best)
}

fn run_from(
    scheme: Scheme,
    problem: &LinkProblem,
    params: &PrecoderOptParams,
    warm: Option<&WarmStart>,
) -> Result<SchemeOutcome> {
    problem.validate()?;
    if !(params.epsilon > 0.0) {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    let start = Instant::now();
    let k = problem.users();

    let mut precoder = match warm {
        Some(w) => w.precoder.clone(),
        None => initial_precoder(problem, scheme, params.init_strategy),
    };
    if scheme != Scheme::Rsma {
        precoder = precoder.without_common();
    }
    if precoder.power() > problem.power {
        precoder = precoder.scaled((problem.power / precoder.power()).sqrt());
    }

    let mut split = RateSplit::zeros(k);
    let mut order = None;
    let mut report = match scheme {
        Scheme::Rsma => {
            // the warm split, trimmed to the current cap, competes with
            // handing the whole cap to the heaviest user
            let cap = signal::common_rate_cap(problem.channels, &precoder, problem.sigma2)?;
            let mut candidates = vec![RateSplit::best_for_cap(cap, problem.weights)];
            if let Some(w) = warm {
                candidates.push(fit_split(w.split.common_portions.clone(), cap));
            }
            let mut best: Option<(RateSplit, RateReport)> = None;
            for c in candidates {
                let r = evaluate(scheme, problem, &precoder, &c, None)?;
                if best.as_ref().is_none_or(|(_, b)| r.wsr > b.wsr) {
                    best = Some((c, r));
                }
            }
            let (s, r) = best.expect("at least one candidate split");
            split = s;
            r
        }
        Scheme::Sdma => evaluate(scheme, problem, &precoder, &split, None)?,
        Scheme::Noma => {
            let fresh = signal::weakest_first_order(problem.channels);
            let mut best = (fresh.clone(), evaluate(scheme, problem, &precoder, &split, Some(&fresh))?);
            if let Some(prev) = warm.and_then(|w| w.order.clone()) {
                let r = evaluate(scheme, problem, &precoder, &split, Some(&prev))?;
                if r.wsr > best.1.wsr {
                    best = (prev, r);
                }
            }
            order = Some(best.0);
            best.1
        }
    };

    let mut trace = RunTrace::default();
    trace.push(TraceRecord {
        iteration: 0,
        wsr: report.wsr,
        uav: None,
        rates: report.overall_rates.clone(),
        status: StepStatus::Initial,
        elapsed: start.elapsed(),
    });

    if problem.power == 0.0 {
        return Ok(SchemeOutcome { scheme, precoder, split, order, report, trace, converged: true, status: StepStatus::Converged });
    }

    let mut converged = false;
    let mut status = StepStatus::MaxIterations;
    for iteration in 1..=params.max_outer_iterations {
        // While some rate threshold is missed, the step maximizes the rates of
        // the users below threshold and holds everyone else where they are.
        let restoring = !meets_thresholds(problem, &report);
        let (restore_weights, restore_thresholds) = restoration_targets(problem, &report);
        let step_problem = if restoring {
            LinkProblem { weights: &restore_weights, rate_thresholds: &restore_thresholds, ..*problem }
        } else {
            *problem
        };
        let step = match scheme {
            // a silent common stream has a zero equalizer, so it cannot carry
            // rate in this step and the private-only step is the exact update
            Scheme::Rsma if precoder.column_power(0) == 0.0 => {
                let mut step = solve_sdma_step(&step_problem, &precoder, &params.solver)?;
                step.v = vec![0.0; k];
                step
            }
            Scheme::Rsma => {
                let state = WmmseState::mmse(problem.channels, &precoder, problem.sigma2)?;
                let cap = signal::common_rate_cap(problem.channels, &precoder, problem.sigma2)?;
                let v0: Vec<f64> = split
                    .common_portions
                    .iter()
                    .map(|r| -(0.998 * r + 1e-3 * cap.max(0.0) / k as f64) - 1e-12)
                    .collect();
                solve_p5_given_ue(&step_problem, &state, Some((&precoder, &v0)), &params.solver)?
            }
            Scheme::Sdma => solve_sdma_step(&step_problem, &precoder, &params.solver)?,
            Scheme::Noma => {
                solve_sic_step(&step_problem, &precoder, order.as_deref().unwrap(), &report.overall_rates, &params.solver)?
            }
        };
        // an inaccurate solve still returns a strictly feasible point, and the
        // ascent check below decides whether it is kept
        if step.status == SolveStatus::Infeasible {
            status = StepStatus::Infeasible;
            break;
        }

        let new_split = match scheme {
            Scheme::Rsma => {
                let raw: Vec<f64> = step.v.iter().map(|v| (-v).max(0.0)).collect();
                fit_split(raw, signal::common_rate_cap(problem.channels, &step.precoder, problem.sigma2)?)
            }
            _ => RateSplit::zeros(k),
        };
        let new_report = evaluate(scheme, problem, &step.precoder, &new_split, order.as_deref())?;
        if restoring {
            let gain = threshold_progress(problem, &new_report) - threshold_progress(problem, &report);
            precoder = step.precoder;
            split = new_split;
            report = new_report;
            trace.push(record(iteration, &report, StepStatus::Ok, start));
            if !meets_thresholds(problem, &report) && gain <= params.epsilon * problem.rate_thresholds.iter().sum::<f64>() {
                status = StepStatus::Infeasible;
                break;
            }
            continue;
        }
        let delta = new_report.wsr - report.wsr;
        if delta < 0.0 {
            // only solver round-off can lower the WSR; keep the better iterate
            if crate::trace::settled(delta, report.wsr, params.epsilon) || -delta <= ROUNDOFF * (1.0 + report.wsr.abs()) {
                converged = true;
                status = StepStatus::Converged;
            } else {
                status = StepStatus::SolverLimit;
            }
            trace.push(record(iteration, &report, status, start));
            break;
        }
        precoder = step.precoder;
        split = new_split;
        report = new_report;
        let done = crate::trace::settled(delta, report.wsr - delta, params.epsilon);
        trace.push(record(iteration, &report, if done { StepStatus::Converged } else { StepStatus::Ok }, start));
        if done {
            converged = true;
            status = StepStatus::Converged;
            break;
        }
    }

    Ok(SchemeOutcome { scheme, precoder, split, order, report, trace, converged, status })
}

fn meets_thresholds(problem: &LinkProblem, report: &RateReport) -> bool {
    report
        .overall_rates
        .iter()
        .zip(problem.rate_thresholds)
        .all(|(r, th)| *r >= th - signal::FEASIBILITY_TOL)
}

/// Weights and thresholds for a restoration step: users below threshold get
/// unit weight, the others a small one, and every threshold is capped at the
/// current rate so the step is feasible from where it starts.
fn restoration_targets(problem: &LinkProblem, report: &RateReport) -> (Vec<f64>, Vec<f64>) {
    problem
        .rate_thresholds
        .iter()
        .zip(&report.overall_rates)
        .map(|(&th, &r)| if r >= th { (1e-3, th) } else { (1.0, 0.999 * r) })
        .unzip()
}

/// Total rate still missing across thresholds (negated, so larger is better).
fn threshold_progress(problem: &LinkProblem, report: &RateReport) -> f64 {
    -report
        .overall_rates
        .iter()
        .zip(problem.rate_thresholds)
        .map(|(r, th)| (th - r).max(0.0))
        .sum::<f64>()
}

/// Scales `portions` down onto the cap when round-off pushed the sum above it.
pub(crate) fn fit_split(portions: Vec<f64>, cap: f64) -> RateSplit {
    let total: f64 = portions.iter().sum();
    let cap = cap.max(0.0);
    if total <= cap {
        return RateSplit { common_portions: portions };
    }
    let scale = cap / total;
    RateSplit { common_portions: portions.into_iter().map(|r| r * scale).collect() }
}

fn record(iteration: usize, report: &RateReport, status: StepStatus, start: Instant) -> TraceRecord {
    TraceRecord {
        iteration,
        wsr: report.wsr,
        uav: None,
        rates: report.overall_rates.clone(),
        status,
        elapsed: start.elapsed(),
    }
}

/// Rate-splitting precoder and common-rate allocation.
pub fn optimize_rsma(problem: &LinkProblem, params: &PrecoderOptParams) -> Result<SchemeOutcome> {
    optimize(Scheme::Rsma, problem, params, None)
}

/// Linear precoding without a common stream.
pub fn sdma_optimize(problem: &LinkProblem, params: &PrecoderOptParams) -> Result<SchemeOutcome> {
    optimize(Scheme::Sdma, problem, params, None)
}

/// Superposition coding with SIC in weakest-first order.
pub fn noma_optimize(problem: &LinkProblem, params: &PrecoderOptParams) -> Result<SchemeOutcome> {
    optimize(Scheme::Noma, problem, params, None)
}
