//! Air-to-ground channel generation.
//!
//! Two models are provided. The line-of-sight model gives every antenna the
//! same real gain `d^(-beta/2)`. The Rician model multiplies that gain by a
//! unit-power small-scale coefficient whose K-factor grows exponentially with
//! the elevation angle between user and UAV:
//!
//! ```text
//! K(theta) = a1 * exp(b1 * theta)
//! g        = sqrt(K/(K+1)) + sqrt(1/(K+1)) * w,   w ~ CN(0, 1)
//! ```

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn squared_distance(&self, other: &Position3D) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn horizontal_distance(&self, other: &Position3D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Channel from the UAV's `N_t` antennas to one single-antenna user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    pub coefficients: Vec<Complex64>,
    pub distance: f64,
    pub user_index: usize,
}

impl ChannelVector {
    pub fn n_t(&self) -> usize {
        self.coefficients.len()
    }

    /// `h^H p` for a length-`N_t` precoder column.
    pub fn inner(&self, p: &[Complex64]) -> Complex64 {
        debug_assert_eq!(p.len(), self.coefficients.len());
        self.coefficients
            .iter()
            .zip(p)
            .map(|(h, p)| h.conj() * p)
            .sum()
    }

    pub fn gain(&self, p: &[Complex64]) -> f64 {
        self.inner(p).norm_sqr()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coefficients.iter().map(|h| h.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RicianParams {
    pub a1: f64,
    pub b1: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_beta() -> f64 {
    2.0
}

impl Default for RicianParams {
    /// `(a1, b1) = (10^0.5, 10^1.5)`, `beta = 2`.
    fn default() -> Self {
        Self {
            a1: 10f64.powf(0.5),
            b1: 10f64.powf(1.5),
            beta: 2.0,
        }
    }
}

impl RicianParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a1 > 0.0 && self.b1 > 0.0 && self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Rician parameters must be positive (a1={}, b1={}, beta={})",
                self.a1, self.b1, self.beta
            )));
        }
        Ok(())
    }
}

pub fn distance(uav: &Position3D, user: &Position3D) -> Result<f64> {
    let d = uav.squared_distance(user).sqrt();
    if d > 0.0 {
        Ok(d)
    } else {
        Err(Error::DegenerateGeometry)
    }
}

fn check_dims(beta: f64, n_t: usize) -> Result<()> {
    if n_t == 0 {
        return Err(Error::InvalidParameter("n_t must be at least 1".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    Ok(())
}

/// Free-space LoS channel: every coefficient equals `d^(-beta/2)`.
pub fn los_channel(uav: &Position3D, user: &Position3D, beta: f64, n_t: usize) -> Result<ChannelVector> {
    check_dims(beta, n_t)?;
    let d = distance(uav, user)?;
    let amplitude = d.powf(-beta / 2.0);
    Ok(ChannelVector {
        coefficients: vec![Complex64::new(amplitude, 0.0); n_t],
        distance: d,
        user_index: 0,
    })
}

/// Elevation angle of the UAV as seen from the user, in radians.
pub fn elevation_angle(uav: &Position3D, user: &Position3D) -> Result<f64> {
    let d = distance(uav, user)?;
    Ok(((uav.z - user.z) / d).clamp(-1.0, 1.0).asin())
}

pub fn rician_k_factor(theta: f64, params: &RicianParams) -> f64 {
    params.a1 * (params.b1 * theta).exp()
}

/// Deterministic (LoS) and scattered amplitude weights for a K-factor.
///
/// Written so that `K = inf` yields `(1, 0)` instead of `NaN`.
fn rician_weights(k: f64) -> (f64, f64) {
    let los = (1.0 / (1.0 + 1.0 / k)).sqrt();
    let scatter = (1.0 / (k + 1.0)).sqrt();
    (los, scatter)
}

/// One draw of `CN(0, 1)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Unit-power Rician small-scale coefficient for a given K-factor and scatter draw.
pub fn rician_coefficient(k: f64, scatter: Complex64) -> Complex64 {
    let (los, nlos) = rician_weights(k);
    Complex64::new(los, 0.0) + scatter * nlos
}

pub fn sample_rician_channel<R: Rng + ?Sized>(
    uav: &Position3D,
    user: &Position3D,
    params: &RicianParams,
    n_t: usize,
    rng: &mut R,
) -> Result<ChannelVector> {
    let scatter: Vec<Complex64> = (0..n_t).map(|_| complex_normal(rng)).collect();
    rician_channel_with_scatter(uav, user, params, &scatter)
}

/// Rician channel for a frozen set of scatter draws. Moving the UAV changes
/// the distance and K-factor but not the draws.
pub fn rician_channel_with_scatter(
    uav: &Position3D,
    user: &Position3D,
    params: &RicianParams,
    scatter: &[Complex64],
) -> Result<ChannelVector> {
    check_dims(params.beta, scatter.len())?;
    let d = distance(uav, user)?;
    let theta = elevation_angle(uav, user)?;
    let k = rician_k_factor(theta, params);
    let amplitude = d.powf(-params.beta / 2.0);
    Ok(ChannelVector {
        coefficients: scatter
            .iter()
            .map(|w| rician_coefficient(k, *w) * amplitude)
            .collect(),
        distance: d,
        user_index: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelModel {
    #[default]
    Los,
    Rician(RicianParams),
}

impl ChannelModel {
    pub fn beta(&self) -> f64 {
        match self {
            ChannelModel::Los => 2.0,
            ChannelModel::Rician(p) => p.beta,
        }
    }
}

/// A channel model together with any frozen random draws, so channels can be
/// re-evaluated at arbitrary UAV positions.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelRealization {
    Los { beta: f64 },
    Rician { params: RicianParams, scatter: Vec<Vec<Complex64>> },
}

impl ChannelRealization {
    pub fn draw<R: Rng + ?Sized>(model: &ChannelModel, users: usize, n_t: usize, rng: &mut R) -> Self {
        match model {
            ChannelModel::Los => ChannelRealization::Los { beta: 2.0 },
            ChannelModel::Rician(params) => ChannelRealization::Rician {
                params: *params,
                scatter: (0..users)
                    .map(|_| (0..n_t).map(|_| complex_normal(rng)).collect())
                    .collect(),
            },
        }
    }

    pub fn beta(&self) -> f64 {
        match self {
            ChannelRealization::Los { beta } => *beta,
            ChannelRealization::Rician { params, .. } => params.beta,
        }
    }

    /// Full channels (used by the precoder step).
    pub fn channels(&self, uav: &Position3D, users: &[Position3D], n_t: usize) -> Result<Vec<ChannelVector>> {
        users
            .iter()
            .enumerate()
            .map(|(k, user)| {
                let mut h = match self {
                    ChannelRealization::Los { beta } => los_channel(uav, user, *beta, n_t)?,
                    ChannelRealization::Rician { params, scatter } => {
                        rician_channel_with_scatter(uav, user, params, &scatter[k])?
                    }
                };
                h.user_index = k + 1;
                Ok(h)
            })
            .collect()
    }

    /// Large-scale-only channels (used by placement).
    pub fn large_scale(&self, uav: &Position3D, users: &[Position3D], n_t: usize) -> Result<Vec<ChannelVector>> {
        users
            .iter()
            .enumerate()
            .map(|(k, user)| {
                let mut h = los_channel(uav, user, self.beta(), n_t)?;
                h.user_index = k + 1;
                Ok(h)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    const ORIGIN: Position3D = Position3D::new(0.0, 0.0, 0.0);

    #[test]
    fn distances() {
        assert_eq!(distance(&Position3D::new(0.0, 0.0, 100.0), &ORIGIN).unwrap(), 100.0);
        assert_eq!(distance(&Position3D::new(3.0, 4.0, 0.0), &ORIGIN).unwrap(), 5.0);
        assert_eq!(distance(&ORIGIN, &ORIGIN), Err(Error::DegenerateGeometry));
    }

    #[test]
    fn los_examples() {
        let h = los_channel(&Position3D::new(0.0, 0.0, 100.0), &ORIGIN, 2.0, 2).unwrap();
        assert_eq!(h.coefficients, vec![Complex64::new(0.01, 0.0); 2]);
        let h = los_channel(&Position3D::new(0.0, 1.0, 0.0), &ORIGIN, 2.0, 4).unwrap();
        assert!(h.coefficients.iter().all(|c| *c == Complex64::new(1.0, 0.0)));
        let h = los_channel(&Position3D::new(0.0, 0.0, 100.0), &ORIGIN, 4.0, 1).unwrap();
        assert_relative_eq!(h.coefficients[0].re, 1e-4, max_relative = 1e-15);
        assert!(los_channel(&ORIGIN, &ORIGIN, 2.0, 2).is_err());
        assert!(los_channel(&Position3D::new(1.0, 0.0, 0.0), &ORIGIN, 2.0, 0).is_err());
    }

    #[test]
    fn elevation_examples() {
        assert_eq!(elevation_angle(&Position3D::new(0.0, 0.0, 100.0), &ORIGIN).unwrap(), FRAC_PI_2);
        assert_eq!(elevation_angle(&Position3D::new(100.0, 0.0, 0.0), &ORIGIN).unwrap(), 0.0);
        assert_relative_eq!(
            elevation_angle(&Position3D::new(100.0, 0.0, 100.0), &ORIGIN).unwrap(),
            FRAC_PI_4,
            epsilon = 1e-15
        );
        let up = elevation_angle(&Position3D::new(30.0, 10.0, 50.0), &ORIGIN).unwrap();
        let down = elevation_angle(&Position3D::new(30.0, 10.0, -50.0), &ORIGIN).unwrap();
        assert_eq!(up, -down);
    }

    #[test]
    fn k_factor_examples() {
        let p = RicianParams::default();
        assert_relative_eq!(rician_k_factor(0.0, &p), 3.1622776601683795, max_relative = 1e-15);
        let unit = RicianParams { a1: 1.0, ..p };
        assert_eq!(rician_k_factor(0.0, &unit), 1.0);
        // independent scalar evaluation
        let expected = 10f64.sqrt() * (10f64.powf(1.5) * FRAC_PI_2).exp();
        assert_relative_eq!(rician_k_factor(FRAC_PI_2, &p), expected, max_relative = 1e-14);
        let grid: Vec<f64> = (0..100).map(|i| i as f64 * FRAC_PI_2 / 99.0).collect();
        for w in grid.windows(2) {
            assert!(rician_k_factor(w[1], &p) > rician_k_factor(w[0], &p));
        }
    }

    #[test]
    fn rician_limits() {
        let w = Complex64::new(0.7, -1.3);
        assert_eq!(rician_coefficient(f64::INFINITY, w), Complex64::new(1.0, 0.0));
        assert_eq!(rician_coefficient(0.0, w), w);
        // zenith with the default constants is numerically pure LoS
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let uav = Position3D::new(0.0, 0.0, 100.0);
        let h = sample_rician_channel(&uav, &ORIGIN, &RicianParams::default(), 3, &mut rng).unwrap();
        let los = los_channel(&uav, &ORIGIN, 2.0, 3).unwrap();
        for (a, b) in h.coefficients.iter().zip(&los.coefficients) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn rician_unit_power_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let k = 3.0;
        let mean: f64 = (0..n)
            .map(|_| rician_coefficient(k, complex_normal(&mut rng)).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");

        // pure scatter: 3-sigma band; var(|w|^2) = 1 for CN(0,1)
        let mean0: f64 = (0..n)
            .map(|_| rician_coefficient(0.0, complex_normal(&mut rng)).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((mean0 - 1.0).abs() < 3.0 / (n as f64).sqrt(), "mean {mean0}");
    }

    #[test]
    fn realization_is_position_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let users = [Position3D::new(0.0, 0.0, 0.0), Position3D::new(200.0, 50.0, 0.0)];
        let real = ChannelRealization::draw(&ChannelModel::Rician(RicianParams { a1: 1.0, b1: 1.0, beta: 2.0 }), 2, 4, &mut rng);
        let uav = Position3D::new(50.0, 20.0, 90.0);
        let a = real.channels(&uav, &users, 4).unwrap();
        let b = real.channels(&uav, &users, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1].user_index, 2);
        let ls = real.large_scale(&uav, &users, 4).unwrap();
        assert_relative_eq!(ls[0].coefficients[0].re, 1.0 / a[0].distance, max_relative = 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn los_is_antenna_independent_and_scales(
                x in -300.0..300.0f64, y in -300.0..300.0f64, z in 1.0..200.0f64,
                beta in 0.5..4.0f64, c in 0.1..10.0f64, n_t in 1usize..6,
            ) {
                let uav = Position3D::new(x, y, z);
                let h = los_channel(&uav, &ORIGIN, beta, n_t).unwrap();
                prop_assert!(h.coefficients.iter().all(|c| *c == h.coefficients[0]));
                let scaled = los_channel(&Position3D::new(c * x, c * y, c * z), &ORIGIN, beta, n_t).unwrap();
                let expected = h.coefficients[0].re * c.powf(-beta / 2.0);
                prop_assert!((scaled.coefficients[0].re - expected).abs() <= 1e-12 * expected);
            }
        }
    }
}
