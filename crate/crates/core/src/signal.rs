//! SINRs and rates of the one-layer rate-splitting downlink.
//!
//! All rates here are spectral efficiencies in bits/s/Hz. The bandwidth only
//! enters when results are reported (see [`RateReport::wsr_bps`]).

use num_complex::Complex64;

use crate::channel::ChannelVector;
use crate::error::{Error, Result};

/// Feasibility tolerance on the power budget and the common-rate cap.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// `N_t x (K+1)` precoder stored column-wise; column 0 carries the common stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub columns: Vec<Vec<Complex64>>,
}

impl Precoder {
    pub fn zeros(n_t: usize, users: usize) -> Self {
        Self {
            columns: vec![vec![Complex64::new(0.0, 0.0); n_t]; users + 1],
        }
    }

    pub fn n_t(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn users(&self) -> usize {
        self.columns.len().saturating_sub(1)
    }

    pub fn common(&self) -> &[Complex64] {
        &self.columns[0]
    }

    pub fn private(&self, k: usize) -> &[Complex64] {
        &self.columns[k]
    }

    /// `tr(P P^H)`.
    pub fn power(&self) -> f64 {
        self.columns.iter().flatten().map(|c| c.norm_sqr()).sum()
    }

    pub fn column_power(&self, i: usize) -> f64 {
        self.columns[i].iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            columns: self
                .columns
                .iter()
                .map(|col| col.iter().map(|c| c * factor).collect())
                .collect(),
        }
    }

    pub fn without_common(&self) -> Self {
        let mut p = self.clone();
        p.columns[0].iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        p
    }

    /// `|1^T p_i|^2`, the large-scale-only gain used by placement.
    pub fn aligned_gain(&self, i: usize) -> f64 {
        self.columns[i].iter().sum::<Complex64>().norm_sqr()
    }

    pub fn is_power_feasible(&self, budget: f64) -> bool {
        self.power() <= budget + FEASIBILITY_TOL
    }

    fn check(&self, h: &ChannelVector) -> Result<()> {
        if self.columns.len() < 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: self.columns.len() });
        }
        for col in &self.columns {
            if col.len() != h.n_t() {
                return Err(Error::DimensionMismatch { expected: h.n_t(), got: col.len() });
            }
        }
        Ok(())
    }
}

/// Per-user portions of the common rate (bits/s/Hz).
#[derive(Debug, Clone, PartialEq)]
pub struct RateSplit {
    pub common_portions: Vec<f64>,
}

impl RateSplit {
    pub fn zeros(users: usize) -> Self {
        Self { common_portions: vec![0.0; users] }
    }

    pub fn total(&self) -> f64 {
        self.common_portions.iter().sum()
    }

    /// Hands the whole cap to the highest-weight user (first on ties), which
    /// maximizes `sum w_k r_k` subject to `sum r_k <= cap`.
    pub fn best_for_cap(cap: f64, weights: &[f64]) -> Self {
        let mut portions = vec![0.0; weights.len()];
        if let Some((best, _)) = weights
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |acc, (i, &w)| match acc {
                Some((_, bw)) if bw >= w => acc,
                _ => Some((i, w)),
            })
        {
            portions[best] = cap.max(0.0);
        }
        Self { common_portions: portions }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub common_rates: Vec<f64>,
    pub private_rates: Vec<f64>,
    pub overall_rates: Vec<f64>,
    pub wsr: f64,
}

impl RateReport {
    pub fn wsr_bps(&self, bandwidth_hz: f64) -> f64 {
        self.wsr * bandwidth_hz
    }

    pub fn sum_rate(&self) -> f64 {
        self.overall_rates.iter().sum()
    }
}

pub fn common_sinr(h: &ChannelVector, precoder: &Precoder, sigma2: f64) -> Result<f64> {
    precoder.check(h)?;
    let signal = h.gain(precoder.common());
    let interference: f64 = precoder.columns[1..].iter().map(|p| h.gain(p)).sum();
    Ok(signal / (interference + sigma2))
}

/// Post-SIC SINR of private stream `k` (1-based); the common stream is
/// already removed.
pub fn private_sinr(h: &ChannelVector, precoder: &Precoder, k: usize, sigma2: f64) -> Result<f64> {
    precoder.check(h)?;
    let users = precoder.users();
    if k == 0 || k > users {
        return Err(Error::UserIndex { index: k, users });
    }
    let signal = h.gain(precoder.private(k));
    let interference: f64 = (1..=users)
        .filter(|&i| i != k)
        .map(|i| h.gain(precoder.private(i)))
        .sum();
    Ok(signal / (interference + sigma2))
}

pub fn rate_from_sinr(sinr: f64) -> f64 {
    sinr.ln_1p() / std::f64::consts::LN_2
}

fn check_users(channels: &[ChannelVector], precoder: &Precoder) -> Result<()> {
    if channels.is_empty() {
        return Err(Error::InvalidParameter("at least one user is required".into()));
    }
    if precoder.users() != channels.len() {
        return Err(Error::DimensionMismatch { expected: channels.len(), got: precoder.users() });
    }
    Ok(())
}

pub fn common_rates(channels: &[ChannelVector], precoder: &Precoder, sigma2: f64) -> Result<Vec<f64>> {
    check_users(channels, precoder)?;
    channels
        .iter()
        .map(|h| common_sinr(h, precoder, sigma2).map(rate_from_sinr))
        .collect()
}

pub fn private_rates(channels: &[ChannelVector], precoder: &Precoder, sigma2: f64) -> Result<Vec<f64>> {
    check_users(channels, precoder)?;
    channels
        .iter()
        .enumerate()
        .map(|(k, h)| private_sinr(h, precoder, k + 1, sigma2).map(rate_from_sinr))
        .collect()
}

/// Largest common rate every user can decode.
pub fn common_rate_cap(channels: &[ChannelVector], precoder: &Precoder, sigma2: f64) -> Result<f64> {
    Ok(common_rates(channels, precoder, sigma2)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

pub fn rate_report(
    channels: &[ChannelVector],
    precoder: &Precoder,
    split: &RateSplit,
    weights: &[f64],
    sigma2: f64,
) -> Result<RateReport> {
    let common = common_rates(channels, precoder, sigma2)?;
    let private = private_rates(channels, precoder, sigma2)?;
    let k = channels.len();
    if split.common_portions.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: split.common_portions.len() });
    }
    if weights.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: weights.len() });
    }
    if let Some(bad) = split.common_portions.iter().find(|r| **r < -FEASIBILITY_TOL) {
        return Err(Error::InvalidParameter(format!("negative common portion {bad}")));
    }
    let cap = common.iter().copied().fold(f64::INFINITY, f64::min);
    let sum = split.total();
    if sum > cap + FEASIBILITY_TOL {
        return Err(Error::InfeasibleSplit { sum, cap });
    }
    let overall: Vec<f64> = split
        .common_portions
        .iter()
        .zip(&private)
        .map(|(r, p)| r + p)
        .collect();
    let wsr = weights.iter().zip(&overall).map(|(w, r)| w * r).sum();
    Ok(RateReport { common_rates: common, private_rates: private, overall_rates: overall, wsr })
}

/// SIC decoding order for superposition coding: users sorted by ascending
/// channel strength, so the weakest user's message is decoded first by all.
/// Ties keep index order. Returns 0-based user indices.
pub fn weakest_first_order(channels: &[ChannelVector]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..channels.len()).collect();
    order.sort_by(|&a, &b| {
        channels[a]
            .norm_sqr()
            .partial_cmp(&channels[b].norm_sqr())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Rate of the stream in decoding position `pos`, seen at the user in
/// position `at` (`at >= pos`): streams later in the order are interference.
pub fn sic_stream_rate(
    channels: &[ChannelVector],
    precoder: &Precoder,
    order: &[usize],
    pos: usize,
    at: usize,
    sigma2: f64,
) -> f64 {
    let h = &channels[order[at]];
    let signal = h.gain(precoder.private(order[pos] + 1));
    let interference: f64 = order[pos + 1..].iter().map(|&i| h.gain(precoder.private(i + 1))).sum();
    rate_from_sinr(signal / (interference + sigma2))
}

/// Superposition coding with SIC: the message of user `order[j]` must be
/// decoded by every user at positions `j..K`, so its rate is the minimum over
/// those users. The common column of `precoder` must be zero.
pub fn sic_rate_report(
    channels: &[ChannelVector],
    precoder: &Precoder,
    order: &[usize],
    weights: &[f64],
    sigma2: f64,
) -> Result<RateReport> {
    check_users(channels, precoder)?;
    let k = channels.len();
    if order.len() != k || weights.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: order.len().min(weights.len()) });
    }
    for h in channels {
        precoder.check(h)?;
    }
    if precoder.column_power(0) > 0.0 {
        return Err(Error::InvalidParameter("SIC precoder must not carry a common stream".into()));
    }
    let mut rates = vec![0.0; k];
    for pos in 0..k {
        rates[order[pos]] = (pos..k)
            .map(|at| sic_stream_rate(channels, precoder, order, pos, at, sigma2))
            .fold(f64::INFINITY, f64::min);
    }
    let wsr = weights.iter().zip(&rates).map(|(w, r)| w * r).sum();
    Ok(RateReport {
        common_rates: vec![0.0; k],
        private_rates: rates.clone(),
        overall_rates: rates,
        wsr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn chan(coeffs: &[f64]) -> ChannelVector {
        ChannelVector { coefficients: coeffs.iter().map(|&x| c(x)).collect(), distance: 1.0, user_index: 1 }
    }

    /// K=2, N_t=2, h=(0.01,0.01), p0=(5,5), p1=(1,0), p2=(0,1).
    fn derived_instance() -> (ChannelVector, Precoder) {
        let p = Precoder {
            columns: vec![vec![c(5.0), c(5.0)], vec![c(1.0), c(0.0)], vec![c(0.0), c(1.0)]],
        };
        (chan(&[0.01, 0.01]), p)
    }

    #[test]
    fn common_sinr_examples() {
        let (h, p) = derived_instance();
        // |h^H p0|^2 = 0.1^2 = 0.01; interference 1e-4 + 1e-4
        assert_relative_eq!(common_sinr(&h, &p, 1.0).unwrap(), 0.01 / 1.0002, max_relative = 1e-13);
        assert_eq!(common_sinr(&h, &p.without_common(), 1.0).unwrap(), 0.0);

        let pt: f64 = 7.5;
        let phase = Complex64::from_polar(1.0, 0.3);
        let single = Precoder { columns: vec![vec![phase * pt.sqrt()], vec![c(0.0)]] };
        assert_relative_eq!(common_sinr(&chan(&[1.0]), &single, 1.0).unwrap(), pt, max_relative = 1e-14);

        let wrong = Precoder { columns: vec![vec![c(1.0)], vec![c(1.0)]] };
        assert!(matches!(common_sinr(&h, &wrong, 1.0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn private_sinr_examples() {
        let (h, p) = derived_instance();
        assert_relative_eq!(private_sinr(&h, &p, 1, 1.0).unwrap(), 1e-4 / (1.0 + 1e-4), max_relative = 1e-13);
        let mut only_one = p.clone();
        only_one.columns[2] = vec![c(0.0), c(0.0)];
        assert_relative_eq!(private_sinr(&h, &only_one, 1, 0.5).unwrap(), 1e-4 / 0.5, max_relative = 1e-13);
        assert_eq!(private_sinr(&h, &only_one, 2, 1.0).unwrap(), 0.0);
        assert!(matches!(private_sinr(&h, &p, 3, 1.0), Err(Error::UserIndex { index: 3, users: 2 })));
        assert!(private_sinr(&h, &p, 0, 1.0).is_err());
    }

    #[test]
    fn rates() {
        assert_eq!(rate_from_sinr(0.0), 0.0);
        assert_eq!(rate_from_sinr(1.0), 1.0);
        assert_eq!(rate_from_sinr(3.0), 2.0);
    }

    #[test]
    fn cap_and_report() {
        let (h, p) = derived_instance();
        let far = chan(&[0.005, 0.005]);
        let channels = vec![h.clone(), far.clone()];
        let cap = common_rate_cap(&channels, &p, 1.0).unwrap();
        let expected = rate_from_sinr(common_sinr(&h, &p, 1.0).unwrap())
            .min(rate_from_sinr(common_sinr(&far, &p, 1.0).unwrap()));
        assert_eq!(cap, expected);
        assert_eq!(cap, rate_from_sinr(common_sinr(&far, &p, 1.0).unwrap()));

        let zero = rate_report(&channels, &p, &RateSplit::zeros(2), &[1.0, 2.0], 1.0).unwrap();
        assert_eq!(zero.overall_rates, zero.private_rates);
        assert_eq!(zero.wsr, zero.private_rates[0] + 2.0 * zero.private_rates[1]);

        let split = RateSplit { common_portions: vec![cap * 0.25, cap * 0.75] };
        let r = rate_report(&channels, &p, &split, &[1.0, 1.0], 1.0).unwrap();
        assert_eq!(r.wsr, r.overall_rates[0] + r.overall_rates[1]);
        for k in 0..2 {
            assert_eq!(r.overall_rates[k], split.common_portions[k] + r.private_rates[k]);
        }

        let bad = RateSplit { common_portions: vec![cap, 1e-3] };
        assert!(matches!(rate_report(&channels, &p, &bad, &[1.0, 1.0], 1.0), Err(Error::InfeasibleSplit { .. })));
    }

    #[test]
    fn best_split_goes_to_heaviest_user() {
        assert_eq!(RateSplit::best_for_cap(0.5, &[1.0, 3.0, 3.0]).common_portions, vec![0.0, 0.5, 0.0]);
        assert_eq!(RateSplit::best_for_cap(0.5, &[1.0, 1.0]).common_portions, vec![0.5, 0.0]);
    }

    #[test]
    fn sic_two_user_degraded() {
        // weak user 2 decoded first by both; strong user 1 is interference free
        let strong = chan(&[0.02, 0.02]);
        let weak = chan(&[0.01, 0.01]);
        let channels = vec![strong.clone(), weak.clone()];
        let order = weakest_first_order(&channels);
        assert_eq!(order, vec![1, 0]);
        let p = Precoder { columns: vec![vec![c(0.0), c(0.0)], vec![c(2.0), c(2.0)], vec![c(5.0), c(5.0)]] };
        let r = sic_rate_report(&channels, &p, &order, &[1.0, 1.0], 1.0).unwrap();
        let a_s = strong.gain(p.private(1));
        let a_w_at_w = weak.gain(p.private(2));
        let r_w = rate_from_sinr(a_w_at_w / (weak.gain(p.private(1)) + 1.0))
            .min(rate_from_sinr(strong.gain(p.private(2)) / (a_s + 1.0)));
        assert_relative_eq!(r.overall_rates[1], r_w, max_relative = 1e-14);
        assert_relative_eq!(r.overall_rates[0], rate_from_sinr(a_s), max_relative = 1e-14);
        assert!(sic_rate_report(&channels, &Precoder { columns: vec![vec![c(1.0), c(0.0)], vec![c(0.0); 2], vec![c(0.0); 2]] }, &order, &[1.0, 1.0], 1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cplx() -> impl Strategy<Value = Complex64> {
            (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| Complex64::new(a, b))
        }

        fn instance() -> impl Strategy<Value = (Vec<ChannelVector>, Precoder)> {
            (1usize..4, 1usize..4).prop_flat_map(|(k, n)| {
                (
                    proptest::collection::vec(proptest::collection::vec(cplx(), n), k),
                    proptest::collection::vec(proptest::collection::vec(cplx(), n), k + 1),
                )
                    .prop_map(|(hs, cols)| {
                        let channels = hs
                            .into_iter()
                            .enumerate()
                            .map(|(i, coefficients)| ChannelVector { coefficients, distance: 1.0, user_index: i + 1 })
                            .collect();
                        (channels, Precoder { columns: cols })
                    })
            })
        }

        proptest! {
            #[test]
            fn sic_excludes_common(( channels, p) in instance(), sigma2 in 0.1..2.0f64) {
                for (k, h) in channels.iter().enumerate() {
                    let a = private_sinr(h, &p, k + 1, sigma2).unwrap();
                    let b = private_sinr(h, &p.without_common(), k + 1, sigma2).unwrap();
                    prop_assert_eq!(a, b);
                }
            }

            #[test]
            fn scaling_up_increases_sinr((channels, p) in instance(), c in 1.01..3.0f64) {
                let scaled = p.scaled(c);
                for (k, h) in channels.iter().enumerate() {
                    let (a, b) = (common_sinr(h, &p, 1.0).unwrap(), common_sinr(h, &scaled, 1.0).unwrap());
                    if a > 0.0 { prop_assert!(b > a); }
                    let (a, b) = (private_sinr(h, &p, k + 1, 1.0).unwrap(), private_sinr(h, &scaled, k + 1, 1.0).unwrap());
                    if a > 0.0 { prop_assert!(b > a); }
                }
            }

            #[test]
            fn cap_is_min((channels, p) in instance()) {
                let cap = common_rate_cap(&channels, &p, 1.0).unwrap();
                for r in common_rates(&channels, &p, 1.0).unwrap() {
                    prop_assert!(cap <= r);
                }
            }

            #[test]
            fn los_matches_aligned_form(d in 10.0..500.0f64, (_, p) in instance()) {
                // h = d^-1 * 1  =>  |h^H p|^2 = d^-2 |1^T p|^2
                let n = p.n_t();
                let h = ChannelVector { coefficients: vec![Complex64::new(1.0 / d, 0.0); n], distance: d, user_index: 1 };
                for i in 0..p.columns.len() {
                    let direct = h.gain(&p.columns[i]);
                    let aligned = p.aligned_gain(i) / (d * d);
                    prop_assert!((direct - aligned).abs() <= 1e-12 * aligned.max(1e-300));
                }
            }
        }
    }
}
