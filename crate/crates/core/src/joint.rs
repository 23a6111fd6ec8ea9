//! Joint UAV placement and precoding by alternating optimization, plus the
//! fixed-placement baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::channel::{ChannelModel, ChannelRealization, ChannelVector, Position3D};
use crate::error::{Error, Result};
use crate::placement::{self, Decoding, PlacementBox, PlacementParams, PlacementScenario};
use crate::precoder::{self, LinkProblem, PrecoderOptParams, Scheme, SchemeOutcome, WarmStart};
use crate::signal::{self, Precoder, RateReport, RateSplit};
use crate::trace::{RunTrace, StepStatus, TraceRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub users: Vec<Position3D>,
    pub weights: Vec<f64>,
    /// Transmit power budget (W).
    pub power: f64,
    /// Noise power (W).
    pub sigma2: f64,
    /// Hz
    pub bandwidth: f64,
    /// Minimum rate per user (bits/s).
    pub rate_thresholds: Vec<f64>,
    pub bounds: PlacementBox,
    pub n_t: usize,
    pub channel: ChannelModel,
}

impl Scenario {
    pub fn users(&self) -> usize {
        self.users.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.users.len();
        if k == 0 || self.n_t == 0 {
            return Err(Error::InvalidParameter("need at least one user and one antenna".into()));
        }
        for len in [self.weights.len(), self.rate_thresholds.len()] {
            if len != k {
                return Err(Error::DimensionMismatch { expected: k, got: len });
            }
        }
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(Error::InvalidParameter("power budget must be positive".into()));
        }
        if !(self.sigma2 > 0.0 && self.bandwidth > 0.0) {
            return Err(Error::InvalidParameter("noise power and bandwidth must be positive".into()));
        }
        if self.users.iter().any(|u| !u.is_finite()) || self.rate_thresholds.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidParameter("user positions and thresholds must be finite".into()));
        }
        if let ChannelModel::Rician(p) = &self.channel {
            p.validate()?;
        }
        self.bounds.validate()
    }

    /// Rate thresholds in bits/s/Hz.
    pub fn thresholds_per_hz(&self) -> Vec<f64> {
        self.rate_thresholds.iter().map(|r| r / self.bandwidth).collect()
    }

    /// SNR in dB, `P_t / sigma2`.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.power / self.sigma2).log10()
    }
}

/// Where the alternation starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartPosition {
    /// Horizontal centroid of the users at mid altitude.
    AverageLocation,
    /// Horizontal centroid of the users at `z_min`.
    CentroidAtFloor,
    /// Uniform in the placement box.
    Random(u64),
    Fixed(Position3D),
}

impl StartPosition {
    pub fn resolve(&self, scenario: &Scenario) -> Position3D {
        let b = &scenario.bounds;
        match *self {
            StartPosition::AverageLocation => b.average_location(&scenario.users),
            StartPosition::CentroidAtFloor => b.centroid_at_floor(&scenario.users),
            StartPosition::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Position3D::new(
                    rng.random_range(b.x_min..=b.x_max),
                    rng.random_range(b.y_min..=b.y_max),
                    rng.random_range(b.z_min..=b.z_max),
                )
            }
            StartPosition::Fixed(q) => q,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct JointParams {
    pub epsilon: f64,
    pub max_outer_iterations: usize,
    pub start: StartPosition,
    pub precoder: PrecoderOptParams,
    pub placement: PlacementParams,
}

impl Default for JointParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_outer_iterations: 30,
            start: StartPosition::AverageLocation,
            precoder: PrecoderOptParams::default(),
            placement: PlacementParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSolution {
    pub scheme: Scheme,
    pub uav_position: Position3D,
    pub precoder: Precoder,
    pub rate_split: RateSplit,
    /// SIC order for NOMA.
    pub order: Option<Vec<usize>>,
    pub report: RateReport,
    pub trace: RunTrace,
    pub status: StepStatus,
    pub converged: bool,
}

impl JointSolution {
    pub fn wsr(&self) -> f64 {
        self.report.wsr
    }
}

/// Recomputes the rate report of `(q, P, r)` from scratch.
pub fn evaluate_solution(scenario: &Scenario, realization: &ChannelRealization, solution: &JointSolution) -> Result<RateReport> {
    let channels = realization.channels(&solution.uav_position, &scenario.users, scenario.n_t)?;
    let thresholds = scenario.thresholds_per_hz();
    let link = link_problem(scenario, &channels, &thresholds);
    precoder::evaluate(solution.scheme, &link, &solution.precoder, &solution.rate_split, solution.order.as_deref())
}

fn link_problem<'a>(scenario: &'a Scenario, channels: &'a [ChannelVector], thresholds: &'a [f64]) -> LinkProblem<'a> {
    LinkProblem {
        channels,
        weights: &scenario.weights,
        power: scenario.power,
        sigma2: scenario.sigma2,
        rate_thresholds: thresholds,
    }
}

fn record(iteration: usize, q: Position3D, report: &RateReport, status: StepStatus, start: Instant) -> TraceRecord {
    TraceRecord {
        iteration,
        wsr: report.wsr,
        uav: Some(q),
        rates: report.overall_rates.clone(),
        status,
        elapsed: start.elapsed(),
    }
}

/// Fixes the UAV at the average location and optimizes only the precoder.
pub fn avg_location_baseline(
    scenario: &Scenario,
    realization: &ChannelRealization,
    scheme: Scheme,
    params: &JointParams,
) -> Result<JointSolution> {
    scenario.validate()?;
    let start = Instant::now();
    let q = scenario.bounds.average_location(&scenario.users);
    let channels = realization.channels(&q, &scenario.users, scenario.n_t)?;
    let thresholds = scenario.thresholds_per_hz();
    let out = precoder::optimize(scheme, &link_problem(scenario, &channels, &thresholds), &params.precoder, None)?;
    let mut trace = RunTrace::default();
    trace.push(record(0, q, &out.report, out.status, start));
    Ok(JointSolution {
        scheme,
        uav_position: q,
        precoder: out.precoder,
        rate_split: out.split,
        order: out.order,
        report: out.report,
        trace,
        status: out.status,
        converged: out.converged,
    })
}

/// Alternates placement (SCA on the large-scale channels) and precoding
/// (WMMSE on the full channels) until the WSR settles.
///
/// Each block starts from the other block's latest output, so neither can
/// lower the WSR: a placement move that would (possible only when small-scale
/// fading makes the large-scale surrogate inexact) is discarded.
pub fn alternating_optimize(
    scenario: &Scenario,
    realization: &ChannelRealization,
    scheme: Scheme,
    params: &JointParams,
) -> Result<JointSolution> {
    scenario.validate()?;
    if realization.beta() != 2.0 {
        return Err(Error::InvalidParameter("joint placement needs path-loss exponent 2".into()));
    }
    let start = Instant::now();
    let k = scenario.users();
    let thresholds = scenario.thresholds_per_hz();
    let place = PlacementScenario {
        users: &scenario.users,
        weights: &scenario.weights,
        sigma2: scenario.sigma2,
        beta: 2.0,
        bounds: scenario.bounds,
        rate_thresholds: &thresholds,
    };

    let mut q = params.start.resolve(scenario);
    if !scenario.bounds.contains(&q) {
        return Err(Error::InvalidParameter("start position lies outside the placement box".into()));
    }
    let channels = realization.channels(&q, &scenario.users, scenario.n_t)?;
    let mut current: SchemeOutcome =
        precoder::optimize(scheme, &link_problem(scenario, &channels, &thresholds), &params.precoder, None)?;
    let mut trace = RunTrace::default();
    trace.push(record(0, q, &current.report, StepStatus::Initial, start));

    let mut status = StepStatus::MaxIterations;
    let mut converged = false;
    let mut double_failures = 0;
    for iteration in 1..=params.max_outer_iterations {
        let previous = current.report.wsr;

        // placement block
        let sdma_split = RateSplit::zeros(k);
        let decoding = match scheme {
            Scheme::Rsma => Decoding::Split(&current.split),
            Scheme::Sdma => Decoding::Split(&sdma_split),
            Scheme::Noma => Decoding::Sic(current.order.as_deref().expect("NOMA outcome carries its order")),
        };
        let placed = placement::optimize_placement(&q, &current.precoder, decoding, &place, &params.placement)?;
        let placement_failed = placed.status.is_failure();
        let mut warm = WarmStart::from(&current);
        let mut moved = false;
        if placed.position != q {
            let channels = realization.channels(&placed.position, &scenario.users, scenario.n_t)?;
            let link = link_problem(scenario, &channels, &thresholds);
            let split = match scheme {
                Scheme::Rsma => {
                    let cap = signal::common_rate_cap(&channels, &current.precoder, scenario.sigma2)?;
                    precoder::fit_split(current.split.common_portions.clone(), cap)
                }
                _ => current.split.clone(),
            };
            let report = precoder::evaluate(scheme, &link, &current.precoder, &split, current.order.as_deref())?;
            if report.wsr >= previous {
                q = placed.position;
                warm.split = split;
                moved = true;
            }
        }

        // precoder block, warm-started at the (possibly) new position
        let channels = realization.channels(&q, &scenario.users, scenario.n_t)?;
        let next = precoder::optimize(scheme, &link_problem(scenario, &channels, &thresholds), &params.precoder, Some(&warm))?;
        let precoder_failed = next.status.is_failure() && next.trace.iterations() == 0;
        if next.report.wsr + 1e-12 >= previous || moved {
            current = next;
        }

        if placement_failed && precoder_failed {
            double_failures += 1;
            if double_failures >= 2 {
                return Err(Error::Aborted(format!(
                    "both blocks failed in two consecutive iterations (last at iteration {iteration})"
                )));
            }
        } else {
            double_failures = 0;
        }

        let delta = current.report.wsr - previous;
        let done = crate::trace::settled(delta, previous, params.epsilon);
        let step_status = if done { StepStatus::Converged } else { StepStatus::Ok };
        trace.push(record(iteration, q, &current.report, step_status, start));
        if done {
            converged = true;
            status = StepStatus::Converged;
            break;
        }
    }

    Ok(JointSolution {
        scheme,
        uav_position: q,
        precoder: current.precoder,
        rate_split: current.split,
        order: current.order,
        report: current.report,
        trace,
        status,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(users: Vec<Position3D>, n_t: usize, snr_db: f64) -> Scenario {
        let k = users.len();
        Scenario {
            users,
            weights: vec![1.0; k],
            power: 10f64.powf(snr_db / 10.0),
            sigma2: 1.0,
            bandwidth: 20e6,
            rate_thresholds: vec![0.0; k],
            bounds: PlacementBox::new((0.0, 300.0), (0.0, 300.0), (80.0, 120.0)).unwrap(),
            n_t,
            channel: ChannelModel::Los,
        }
    }

    #[test]
    fn single_user_schemes_coincide() {
        let sc = scenario(vec![Position3D::new(100.0, 200.0, 0.0)], 2, 20.0);
        let real = ChannelRealization::Los { beta: 2.0 };
        let params = JointParams::default();
        let wsr: Vec<f64> = Scheme::ALL
            .iter()
            .map(|&s| alternating_optimize(&sc, &real, s, &params).unwrap().wsr())
            .collect();
        assert!((wsr[0] - wsr[1]).abs() < 1e-6 && (wsr[0] - wsr[2]).abs() < 1e-6, "{wsr:?}");
        // overhead at the floor: 2 antennas, gain 2/80^2
        let best = (1.0 + 100.0 * 2.0 / 6400.0f64).log2();
        assert!((wsr[0] - best).abs() < 1e-4, "{} vs {best}", wsr[0]);
        let base = avg_location_baseline(&sc, &real, Scheme::Rsma, &params).unwrap();
        assert!(base.wsr() < wsr[0]);
    }

    #[test]
    fn outer_loop_is_monotone_and_consistent() {
        let sc = scenario(vec![Position3D::new(0.0, 0.0, 0.0), Position3D::new(0.0, 100.0, 0.0)], 2, 20.0);
        let real = ChannelRealization::Los { beta: 2.0 };
        for scheme in Scheme::ALL {
            let params = JointParams { start: StartPosition::Random(7), ..Default::default() };
            let sol = alternating_optimize(&sc, &real, scheme, &params).unwrap();
            assert!(sol.trace.is_non_decreasing(1e-6), "{scheme}: {:?}", sol.trace.wsr());
            let again = evaluate_solution(&sc, &real, &sol).unwrap();
            assert!((again.wsr - sol.wsr()).abs() <= 1e-6);
            assert!(sc.bounds.contains(&sol.uav_position));
        }
    }

    #[test]
    fn joint_never_below_baseline() {
        let users = vec![
            Position3D::new(0.0, 0.0, 0.0),
            Position3D::new(0.0, 100.0, 0.0),
            Position3D::new(150.0, 150.0, 0.0),
            Position3D::new(200.0, 50.0, 0.0),
        ];
        let sc = scenario(users, 4, 10.0);
        let real = ChannelRealization::Los { beta: 2.0 };
        let params = JointParams::default();
        for scheme in Scheme::ALL {
            let base = avg_location_baseline(&sc, &real, scheme, &params).unwrap();
            let joint = alternating_optimize(&sc, &real, scheme, &params).unwrap();
            assert!(joint.wsr() >= base.wsr() - 1e-6, "{scheme}: {} < {}", joint.wsr(), base.wsr());
        }
    }

    #[test]
    fn weight_scaling_leaves_solution() {
        let sc = scenario(vec![Position3D::new(0.0, 0.0, 0.0), Position3D::new(0.0, 100.0, 0.0)], 2, 20.0);
        let scaled = Scenario { weights: vec![3.0, 3.0], ..sc.clone() };
        let real = ChannelRealization::Los { beta: 2.0 };
        // the optimum is flat in position, so the stopping rules are tightened
        let mut params = JointParams { start: StartPosition::Random(3), epsilon: 1e-10, ..Default::default() };
        params.precoder.epsilon = 1e-10;
        params.placement.epsilon = 1e-12;
        params.placement.solver.tol = 1e-12;
        params.precoder.solver.tol = 1e-12;
        let a = alternating_optimize(&sc, &real, Scheme::Rsma, &params).unwrap();
        let b = alternating_optimize(&scaled, &real, Scheme::Rsma, &params).unwrap();
        assert!((b.wsr() / a.wsr() - 3.0).abs() <= 1e-4, "{} {}", a.wsr(), b.wsr());
        assert!(a.uav_position.squared_distance(&b.uav_position).sqrt() <= 1e-3);
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut sc = scenario(vec![Position3D::new(0.0, 0.0, 0.0)], 1, 10.0);
        sc.power = 0.0;
        assert!(sc.validate().is_err());
        let mut sc = scenario(vec![Position3D::new(0.0, 0.0, 0.0)], 1, 10.0);
        sc.weights = vec![-1.0];
        assert!(sc.validate().is_err());
        let sc = scenario(vec![Position3D::new(0.0, 0.0, 0.0)], 1, 10.0);
        let real = ChannelRealization::Los { beta: 3.0 };
        assert!(alternating_optimize(&sc, &real, Scheme::Rsma, &JointParams::default()).is_err());
    }
}
