//! Circular AR(2) process whose transition kernel is the TWCM conditional of
//! `Θ_t` given `(Θ_{t−1}, Θ_{t−2})`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::angle::TAU;
use crate::copula::{RhoVector, SINGULAR_TOL};
use crate::error::{Result, TwcmError};
use crate::marginals::{open_unit, wc_kernel, wc_kernel_draw, Domain, Marginal};

/// Dependence parameters `(ρ_{t,t−1}, ρ_{t,t−2}, ρ_{t−1,t−2})` and the common
/// circular marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar2Params {
    rho: RhoVector,
    marginal: Marginal,
}

impl Ar2Params {
    pub fn new(rho: [f64; 3], marginal: Marginal) -> Result<Self> {
        let rho = RhoVector::try_from(rho)?;
        let report = rho.validate();
        if !report.is_valid() {
            return Err(TwcmError::domain(format!("AR(2) dependence parameters {rho} are not valid")));
        }
        if marginal.domain() != Domain::Circular {
            return Err(TwcmError::param(format!(
                "AR(2) marginal must be circular, got {}",
                marginal.family()
            )));
        }
        Ok(Self { rho, marginal })
    }

    /// `(ρ_{t,t−1}, ρ_{t,t−2}, ρ_{t−1,t−2})`.
    pub fn rho(&self) -> &RhoVector {
        &self.rho
    }

    pub fn marginal(&self) -> &Marginal {
        &self.marginal
    }

    /// Lag-one pair laws of consecutive steps coincide; needed for the
    /// chain to be stationary.
    pub fn is_stationary(&self) -> bool {
        let a = self.rho.pairwise_phi(0, 1).map(|p| p.phi);
        let b = self.rho.pairwise_phi(1, 2).map(|p| p.phi);
        match (a, b) {
            (Ok(a), Ok(b)) => (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300),
            _ => false,
        }
    }

    /// `φ_t` from the copula-scale values of the two previous angles.
    fn phi_t(&self, u1: f64, u2: f64) -> Complex64 {
        let r = self.rho.as_array();
        -r[2] * (Complex64::from_polar(1.0 / r[1], u1) + Complex64::from_polar(1.0 / r[0], u2))
    }

    /// `(η_t, δ_t)` given `θ_{t−1}`, `θ_{t−2}`.
    pub fn kernel_parameters(&self, prev1: f64, prev2: f64) -> Result<(f64, f64)> {
        let u1 = TAU * self.marginal.cdf(prev1)?;
        let u2 = TAU * self.marginal.cdf(prev2)?;
        let phi = self.phi_t(u1, u2);
        Ok((phi.arg(), phi.norm()))
    }

    /// Density of `θ_t` given `θ_{t−1}`, `θ_{t−2}`.
    pub fn transition_density(&self, theta: f64, prev1: f64, prev2: f64) -> Result<f64> {
        let (eta, delta) = self.kernel_parameters(prev1, prev2)?;
        if (delta - 1.0).abs() < SINGULAR_TOL {
            return Err(TwcmError::SingularKernel(format!("delta_t = {delta} at ({prev1}, {prev2})")));
        }
        let u = TAU * self.marginal.cdf(theta)?;
        Ok(TAU * wc_kernel(u, eta, delta) * self.marginal.pdf(theta)?)
    }

    /// A chain of length `n ≥ 2`; the first pair comes from the bivariate
    /// marginal of `(Θ_{t−2}, Θ_{t−1})`.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n < 2 {
            return Err(TwcmError::param(format!("chain length must be at least 2, got {n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi23 = self.rho.pairwise_phi(1, 2)?.phi;
        let mut u = Vec::with_capacity(n);
        u.push(TAU * open_unit(&mut rng));
        u.push(wc_kernel_draw(&mut rng, u[0], phi23));
        for t in 2..n {
            let phi = self.phi_t(u[t - 1], u[t - 2]);
            let delta = phi.norm();
            if (delta - 1.0).abs() < SINGULAR_TOL || !delta.is_finite() {
                return Err(TwcmError::NumericalDegeneracy(format!(
                    "delta_t = {delta} at step {t} (rho {})",
                    self.rho
                )));
            }
            u.push(wc_kernel_draw(&mut rng, phi.arg(), delta));
        }
        u.iter()
            .map(|&v| self.marginal.quantile((v / TAU).clamp(0.0, 1.0 - f64::EPSILON / 2.0)))
            .collect()
    }
}
