use std::fmt;
use std::time::Duration;

use crate::channel::Position3D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    /// Starting point, before any block update.
    Initial,
    Ok,
    Converged,
    /// Inner solver reported infeasibility; previous iterate kept.
    Infeasible,
    /// Inner solver hit its iteration cap; previous iterate kept.
    SolverLimit,
    /// Outer iteration cap reached before convergence.
    MaxIterations,
}

impl StepStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepStatus::Initial => "initial",
            StepStatus::Ok => "ok",
            StepStatus::Converged => "converged",
            StepStatus::Infeasible => "infeasible",
            StepStatus::SolverLimit => "solver_limit",
            StepStatus::MaxIterations => "max_iterations",
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, StepStatus::Infeasible | StepStatus::SolverLimit)
    }
}

impl fmt::Display for StepStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stopping test on a WSR change, relative to the previous value so that the
/// same tolerance means the same thing at 0 dB and at 30 dB.
pub fn settled(delta: f64, previous: f64, epsilon: f64) -> bool {
    delta.abs() <= epsilon * previous.abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// bits/s/Hz
    pub wsr: f64,
    pub uav: Option<Position3D>,
    pub rates: Vec<f64>,
    pub status: StepStatus,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn push(&mut self, record: TraceRecord) {
        debug_assert!(self.records.last().is_none_or(|r| r.iteration < record.iteration));
        self.records.push(record);
    }

    pub fn wsr(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.wsr).collect()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Number of updates after the initial record.
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iteration)
    }

    /// Largest drop between consecutive records (0 when non-decreasing).
    pub fn max_decrease(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[0].wsr - w[1].wsr)
            .fold(0.0, f64::max)
    }

    pub fn is_non_decreasing(&self, tol: f64) -> bool {
        self.max_decrease() <= tol
    }

    /// First iteration whose WSR is within `fraction` (relative) of the final value.
    pub fn iterations_to_within(&self, fraction: f64) -> Option<usize> {
        let last = self.records.last()?.wsr;
        self.records
            .iter()
            .find(|r| r.wsr >= last * (1.0 - fraction))
            .map(|r| r.iteration)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(iteration: usize, wsr: f64) -> TraceRecord {
        TraceRecord { iteration, wsr, uav: None, rates: vec![], status: StepStatus::Ok, elapsed: Duration::ZERO }
    }

    #[test]
    fn monotonicity_and_settling() {
        let mut t = RunTrace::default();
        for (i, w) in [1.0, 2.0, 1.9999999, 3.0, 3.01].into_iter().enumerate() {
            t.push(rec(i, w));
        }
        assert!(t.is_non_decreasing(1e-6));
        assert!(!t.is_non_decreasing(1e-8));
        assert_eq!(t.iterations(), 4);
        assert_eq!(t.iterations_to_within(0.01), Some(3));
        assert_eq!(RunTrace::default().iterations_to_within(0.01), None);
    }

    #[test]
    fn settling_is_relative() {
        assert!(settled(1e-8, 1e-3, 1e-4));
        assert!(!settled(1e-6, 1e-3, 1e-4));
        assert!(settled(-5e-5, 1.0, 1e-4));
        assert!(settled(0.0, 0.0, 1e-4));
    }
}
