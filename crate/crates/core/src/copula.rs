//! The trivariate wrapped Cauchy copula (TWCC) on `[0, 2π)³`.
//!
//! Coordinates are indexed `0, 1, 2` throughout; `rho.get(i, j)` is the
//! symmetric dependence parameter between coordinates `i` and `j`.

use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angle::{wrap, TAU};
use crate::error::{Result, TwcmError};
use crate::marginals::{fold_parameter, open_unit, wc_kernel, wc_kernel_draw};

/// Tolerance on `|ρ12 ρ13 ρ23 − 1|` for a vector to count as identifiable.
pub const IDENTIFIABLE_TOL: f64 = 1e-9;

/// Distance from `|p| = 1` below which a wrapped Cauchy kernel is singular.
pub const SINGULAR_TOL: f64 = 1e-12;

/// The three copula dependence parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", try_from = "[f64; 3]")]
pub struct RhoVector {
    rho12: f64,
    rho13: f64,
    rho23: f64,
}

impl From<RhoVector> for [f64; 3] {
    fn from(r: RhoVector) -> Self {
        r.as_array()
    }
}

impl TryFrom<[f64; 3]> for RhoVector {
    type Error = TwcmError;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        RhoVector::new(v[0], v[1], v[2])
    }
}

impl fmt::Display for RhoVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.rho12, self.rho13, self.rho23)
    }
}

/// One instance of the existence condition, centred on coordinate `center`:
/// `|ρ_jk| < |ρ_ij ρ_ik| / (|ρ_ij| + |ρ_ik|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationCheck {
    /// `(i, j, k)`, 0-based, with `j < k`.
    pub permutation: (usize, usize, usize),
    pub lhs: f64,
    pub rhs: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub finite: bool,
    pub nonzero: bool,
    pub positive_product: bool,
    pub permutations: [PermutationCheck; 3],
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.finite && self.nonzero && self.positive_product && self.permutations.iter().any(|p| p.passes)
    }

    /// Permutations `(i, j, k)` (0-based) for which the condition holds.
    pub fn passing(&self) -> Vec<(usize, usize, usize)> {
        self.permutations
            .iter()
            .filter(|p| p.passes)
            .map(|p| p.permutation)
            .collect()
    }

    /// Largest `ln(rhs / lhs)` over the three checks; positive iff some check passes.
    pub fn margin(&self) -> f64 {
        self.permutations
            .iter()
            .map(|p| (p.rhs / p.lhs).ln())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Normalising constants of the copula density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopulaConstants {
    pub c1: f64,
    pub c2: f64,
}

fn others(i: usize) -> (usize, usize) {
    match i {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

fn check_pair(i: usize, j: usize) -> Result<()> {
    if i > 2 || j > 2 || i == j {
        return Err(TwcmError::param(format!("invalid coordinate pair ({i}, {j})")));
    }
    Ok(())
}

impl RhoVector {
    /// Components must be finite and nonzero; no further checks are made here.
    pub fn new(rho12: f64, rho13: f64, rho23: f64) -> Result<Self> {
        for v in [rho12, rho13, rho23] {
            if !v.is_finite() || v == 0.0 {
                return Err(TwcmError::param(format!(
                    "rho components must be finite and nonzero, got ({rho12}, {rho13}, {rho23})"
                )));
            }
        }
        Ok(Self { rho12, rho13, rho23 })
    }

    pub fn rho12(&self) -> f64 {
        self.rho12
    }

    pub fn rho13(&self) -> f64 {
        self.rho13
    }

    pub fn rho23(&self) -> f64 {
        self.rho23
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.rho12, self.rho13, self.rho23]
    }

    /// Symmetric accessor with 0-based coordinates.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i.min(j), i.max(j)) {
            (0, 1) => self.rho12,
            (0, 2) => self.rho13,
            (1, 2) => self.rho23,
            _ => panic!("invalid coordinate pair ({i}, {j})"),
        }
    }

    pub fn product(&self) -> f64 {
        self.rho12 * self.rho13 * self.rho23
    }

    /// Multiply every component by `t > 0`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(TwcmError::param(format!("scale factor must be positive, got {t}")));
        }
        RhoVector::new(t * self.rho12, t * self.rho13, t * self.rho23)
    }

    pub fn is_identifiable(&self) -> bool {
        (self.product() - 1.0).abs() <= IDENTIFIABLE_TOL
    }

    pub fn validate(&self) -> ValidityReport {
        let a = self.as_array();
        let finite = a.iter().all(|v| v.is_finite());
        let nonzero = a.iter().all(|&v| v != 0.0);
        let positive_product = self.product() > 0.0;
        let check = |i: usize| {
            let (j, k) = others(i);
            let rij = self.get(i, j).abs();
            let rik = self.get(i, k).abs();
            let lhs = self.get(j, k).abs();
            let rhs = rij * rik / (rij + rik);
            PermutationCheck {
                permutation: (i, j, k),
                lhs,
                rhs,
                passes: lhs < rhs,
            }
        };
        ValidityReport {
            finite,
            nonzero,
            positive_product,
            permutations: [check(0), check(1), check(2)],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_valid()
    }

    /// Identifiable representative: scale by `(ρ12 ρ13 ρ23)^{-1/3}`.
    pub fn normalized(&self) -> Result<Self> {
        let p = self.product();
        if !(p > 0.0) {
            return Err(TwcmError::domain(format!(
                "rho product must be positive to normalise, got {p}"
            )));
        }
        let t = p.cbrt().recip();
        let mut out = self.scaled(t)?;
        // one correction step pulls the product to within a few ulps of 1
        let fix = out.product().cbrt().recip();
        if fix.is_finite() && fix > 0.0 {
            out = out.scaled(fix)?;
        }
        Ok(out)
    }

    /// `c1` and `c2`. Fails if the `c2` radicand is not strictly positive.
    pub fn constants(&self) -> Result<CopulaConstants> {
        let (a, b, c) = (self.rho12, self.rho13, self.rho23);
        let x = a * b / c;
        let y = a * c / b;
        let z = b * c / a;
        let c1 = x + y + z;
        let radicand = x * x + y * y + z * z - 2.0 * (a * a + b * b + c * c);
        if !(radicand > 0.0) || !radicand.is_finite() {
            return Err(TwcmError::DegenerateParameters(format!(
                "c2 radicand {radicand} is not positive for rho {self}"
            )));
        }
        Ok(CopulaConstants {
            c1,
            c2: radicand.sqrt() / TAU.powi(3),
        })
    }

    /// Concentration `φ_ij` of the bivariate marginal of `(U_i, U_j)`.
    pub fn pairwise_phi(&self, i: usize, j: usize) -> Result<PairwiseMarginalSpec> {
        check_pair(i, j)?;
        let (i, j) = (i.min(j), i.max(j));
        let k = 3 - i - j;
        let consts = self.constants()?;
        let rij = self.get(i, j);
        let rik = self.get(i, k);
        let rjk = self.get(j, k);
        let a = rik * rjk / rij - rij * rik / rjk - rij * rjk / rik;
        let b = TAU.powi(3) * consts.c2;
        // (a - b)(a + b) = 4 ρ_ij², so the cancelling branch can use the other root
        let phi = if a > 0.0 {
            2.0 * rij / (a + b)
        } else {
            (a - b) / (2.0 * rij)
        };
        PairwiseMarginalSpec::new(i, j, phi)
    }
}

/// Bivariate-marginal law of a coordinate pair, a wrapped Cauchy-type copula
/// with concentration `phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseMarginalSpec {
    pub i: usize,
    pub j: usize,
    /// As produced by the closed form; may exceed 1 in magnitude.
    pub phi: f64,
}

impl PairwiseMarginalSpec {
    pub fn new(i: usize, j: usize, phi: f64) -> Result<Self> {
        check_pair(i, j)?;
        if !phi.is_finite() || (phi.abs() - 1.0).abs() < SINGULAR_TOL {
            return Err(TwcmError::SingularKernel(format!("phi_{}{} = {phi}", i + 1, j + 1)));
        }
        Ok(Self { i, j, phi })
    }

    /// Equivalent parameter in `(-1, 1)`.
    pub fn folded(&self) -> f64 {
        fold_parameter(self.phi)
    }

    /// `t_2(u_i, u_j)`.
    pub fn density(&self, ui: f64, uj: f64) -> f64 {
        wc_kernel(ui, uj, self.phi) / TAU
    }

    /// `t_{1|1}(u_i | u_j)`; symmetric in its arguments.
    pub fn conditional(&self, ui: f64, uj: f64) -> f64 {
        wc_kernel(ui, uj, self.phi)
    }
}

/// Wrapped Cauchy law of one coordinate given the other two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalWcSpec {
    /// Mode direction, in `[0, 2π)`.
    pub eta: f64,
    /// Modulus of the complex parameter; may exceed 1.
    pub delta: f64,
}

impl ConditionalWcSpec {
    /// Parameters for coordinate `i` given the values `u[j]`, `u[k]` of the other two.
    pub fn new(rho: &RhoVector, i: usize, u: [f64; 3]) -> Result<Self> {
        if i > 2 {
            return Err(TwcmError::param(format!("invalid coordinate {i}")));
        }
        let (j, k) = others(i);
        let rjk = rho.get(j, k);
        let phi = -rjk
            * (Complex64::from_polar(1.0 / rho.get(i, k), u[j])
                + Complex64::from_polar(1.0 / rho.get(i, j), u[k]));
        let delta = phi.norm();
        if (delta - 1.0).abs() < SINGULAR_TOL {
            return Err(TwcmError::SingularKernel(format!(
                "delta_{}|{}{} = 1 for rho {rho} at u = {u:?}",
                i + 1,
                j + 1,
                k + 1
            )));
        }
        Ok(Self {
            eta: wrap(phi.arg()),
            delta,
        })
    }

    /// `t_{1|2}(u_i | ·)`.
    pub fn density(&self, ui: f64) -> f64 {
        wc_kernel(ui, self.eta, self.delta)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        wc_kernel_draw(rng, self.eta, self.delta)
    }
}

/// A validated copula with precomputed constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twcc {
    rho: RhoVector,
    consts: CopulaConstants,
    phi: [PairwiseMarginalSpec; 3],
}

impl Twcc {
    pub fn new(rho: RhoVector) -> Result<Self> {
        let report = rho.validate();
        if !report.is_valid() {
            return Err(TwcmError::domain(format!(
                "rho {rho} violates the copula existence condition"
            )));
        }
        let consts = rho.constants()?;
        Ok(Self {
            rho,
            consts,
            phi: [
                rho.pairwise_phi(0, 1)?,
                rho.pairwise_phi(0, 2)?,
                rho.pairwise_phi(1, 2)?,
            ],
        })
    }

    pub fn rho(&self) -> &RhoVector {
        &self.rho
    }

    pub fn constants(&self) -> CopulaConstants {
        self.consts
    }

    /// `c1 + 2 Σ ρ_ij cos(u_i − u_j)`, the density denominator.
    pub fn bracket(&self, u: [f64; 3]) -> f64 {
        self.consts.c1
            + 2.0
                * (self.rho.rho12 * (u[0] - u[1]).cos()
                    + self.rho.rho13 * (u[0] - u[2]).cos()
                    + self.rho.rho23 * (u[1] - u[2]).cos())
    }

    pub fn log_density(&self, u: [f64; 3]) -> f64 {
        let u = u.map(wrap);
        self.consts.c2.ln() - self.bracket(u).ln()
    }

    pub fn density(&self, u: [f64; 3]) -> f64 {
        self.log_density(u).exp()
    }

    pub fn pairwise(&self, i: usize, j: usize) -> Result<PairwiseMarginalSpec> {
        check_pair(i, j)?;
        Ok(match (i.min(j), i.max(j)) {
            (0, 1) => self.phi[0],
            (0, 2) => self.phi[1],
            _ => self.phi[2],
        })
    }

    /// `t_2(u_i, u_j)` for the pair `(i, j)`.
    pub fn bivariate_density(&self, i: usize, j: usize, ui: f64, uj: f64) -> Result<f64> {
        Ok(self.pairwise(i, j)?.density(ui, uj))
    }

    /// `t_{2|1}`: density of the other two coordinates given any one of them.
    /// With uniform marginals this is `2π t(u)` whichever coordinate is fixed.
    pub fn cond_2given1(&self, u: [f64; 3]) -> f64 {
        TAU * self.density(u)
    }

    /// `t_{1|1}(u_i | u_j)`.
    pub fn cond_1given1(&self, i: usize, j: usize, ui: f64, uj: f64) -> Result<f64> {
        Ok(self.pairwise(i, j)?.conditional(ui, uj))
    }

    /// `t_{1|2}(u_i | u_j, u_k)` where `u` holds all three coordinates.
    pub fn cond_1given2(&self, i: usize, u: [f64; 3]) -> Result<f64> {
        Ok(ConditionalWcSpec::new(&self.rho, i, u)?.density(u[i]))
    }

    /// One draw by sequential conditioning: `U1` uniform, `U2 | U1` from the
    /// pairwise kernel, `U3 | U1, U2` from the conditional wrapped Cauchy.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<[f64; 3]> {
        let u1 = TAU * open_unit(rng);
        let u2 = wc_kernel_draw(rng, u1, self.phi[0].phi);
        let mut u = [u1, u2, 0.0];
        let spec = ConditionalWcSpec::new(&self.rho, 2, u).map_err(|_| {
            TwcmError::NumericalDegeneracy(format!(
                "conditional of U3 is singular for rho {} at (u1, u2) = ({u1}, {u2})",
                self.rho
            ))
        })?;
        u[2] = spec.draw(rng);
        Ok(u)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<[f64; 3]>> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// `n` draws, deterministic given `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<[f64; 3]>> {
        if n == 0 {
            return Err(TwcmError::param("sample size must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::periodic;

    fn rho(a: f64, b: f64, c: f64) -> RhoVector {
        RhoVector::new(a, b, c).unwrap()
    }

    fn reference_sets() -> [RhoVector; 3] {
        [rho(3.0, 3.0, 1.0 / 9.0), rho(9.18, -1.17, -0.09), rho(-2.0, -2.0, 0.25)]
    }

    #[test]
    fn validity_examples() {
        let r = rho(1.0, 1.0, 1.0).validate();
        assert!(!r.is_valid());
        assert!(r.permutations.iter().all(|p| !p.passes && (p.rhs - 0.5).abs() < 1e-15));

        let r = rho(3.0, 3.0, 1.0 / 9.0).validate();
        assert!(r.is_valid());
        assert!(r.passing().contains(&(0, 1, 2)));
        assert!((r.permutations[0].rhs - 1.5).abs() < 1e-15);

        let r = rho(9.18, -1.17, -0.09).validate();
        assert!(r.is_valid());
        assert!(r.passing().contains(&(0, 1, 2)));
        assert!((r.permutations[0].rhs - 10.7406 / 10.35).abs() < 1e-12);

        let r = rho(1.0, 1.0, -1.0).validate();
        assert!(!r.positive_product && !r.is_valid());
    }

    #[test]
    fn construction_rejects_zero_and_nan() {
        assert!(RhoVector::new(0.0, 1.0, 1.0).is_err());
        assert!(RhoVector::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(RhoVector::new(1.0, f64::INFINITY, 1.0).is_err());
        assert!(Twcc::new(rho(1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn normalize_examples() {
        let r = rho(2.0, 2.0, 0.25).normalized().unwrap();
        assert!((r.rho12() - 2.0).abs() < 1e-15 && (r.rho23() - 0.25).abs() < 1e-15);
        let r = rho(6.0, 6.0, 2.0 / 9.0).normalized().unwrap();
        assert!((r.rho12() - 3.0).abs() < 1e-14);
        assert!((r.rho23() - 1.0 / 9.0).abs() < 1e-15);
        for s in [0.01, 0.7, 3.0, 1e3] {
            let r = rho(-s, -s, s).normalized().unwrap();
            assert!((r.product() - 1.0).abs() < 1e-12);
            assert!(r.is_identifiable());
        }
        assert!(matches!(rho(1.0, 1.0, -1.0).normalized(), Err(TwcmError::Domain(_))));
    }

    #[test]
    fn constants_examples() {
        // hand evaluation: c1 = 81 + 1/9 + 1/9, radicand = 6561 - 36 = 6525
        let k = rho(3.0, 3.0, 1.0 / 9.0).constants().unwrap();
        assert!((k.c1 - 731.0 / 9.0).abs() < 1e-12);
        assert!((k.c2 - 6525f64.sqrt() / TAU.powi(3)).abs() < 1e-15);
        assert!((k.c2 - 0.32565).abs() < 1e-5);

        let k = rho(9.18, -1.17, -0.09).constants().unwrap();
        assert!((k.c1 - 120.0).abs() < 0.1);

        for r in reference_sets() {
            let a = r.constants().unwrap();
            let b = r.scaled(2.0).unwrap().constants().unwrap();
            assert!((b.c1 - 2.0 * a.c1).abs() < 1e-12 * a.c1);
            assert!((b.c2 - 2.0 * a.c2).abs() < 1e-12 * a.c2);
        }
    }

    #[test]
    fn log_density_examples() {
        let cop = Twcc::new(rho(3.0, 3.0, 1.0 / 9.0)).unwrap();
        let expected = (6525f64.sqrt() / TAU.powi(3)) / (731.0 / 9.0 + 2.0 * (3.0 + 3.0 + 1.0 / 9.0));
        assert!((cop.density([0.0; 3]) - expected).abs() < 1e-16);
        assert!((cop.density([0.0; 3]) - 3.485e-3).abs() < 1e-6);

        let u = [0.4, 2.2, 5.1];
        let shifted = u.map(|x| x + 1.0);
        assert!((cop.log_density(u) - cop.log_density(shifted)).abs() < 1e-13);
        let doubled = Twcc::new(rho(6.0, 6.0, 2.0 / 9.0)).unwrap();
        assert!((cop.log_density(u) - doubled.log_density(u)).abs() < 1e-13);
        // negative inputs are reduced mod 2π
        assert!((cop.log_density([-1.0, 0.0, 0.0]) - cop.log_density([TAU - 1.0, 0.0, 0.0])).abs() < 1e-13);
    }

    #[test]
    fn normalization_on_64_grid() {
        for r in reference_sets() {
            let cop = Twcc::new(r).unwrap();
            let total = periodic(|a| periodic(|b| periodic(|c| cop.density([a, b, c]), 64, 0.0), 64, 0.0), 64, 0.0);
            assert!((total - 1.0).abs() < 1e-6, "{r}: {total}");
        }
    }

    #[test]
    fn denominator_positive_on_64_grid() {
        for r in reference_sets() {
            let cop = Twcc::new(r).unwrap();
            let h = TAU / 64.0;
            let mut min = f64::INFINITY;
            for a in 0..64 {
                for b in 0..64 {
                    for c in 0..64 {
                        min = min.min(cop.bracket([a as f64 * h, b as f64 * h, c as f64 * h]));
                    }
                }
            }
            assert!(min > 0.0, "{r}: {min}");
        }
    }

    #[test]
    fn pairwise_phi_against_quadrature_oracle() {
        // Oracle: integrate u3 out numerically; a wrapped Cauchy copula with
        // parameter q has 4π² t2(0, 0) = (1 + q)/(1 − q), so q is read off the
        // marginal at the diagonal and checked against the closed form.
        let r = rho(3.0, 3.0, 1.0 / 9.0);
        let cop = Twcc::new(r).unwrap();
        let m00 = periodic(|c| cop.density([0.0, 0.0, c]), 512, 0.0);
        let ratio = TAU * TAU * m00;
        let q = (ratio - 1.0) / (ratio + 1.0);
        let spec = r.pairwise_phi(0, 1).unwrap();
        assert!((spec.folded() - q).abs() < 1e-8, "{} vs {q}", spec.folded());
        // frozen value of the closed form
        assert!((spec.phi + 26.962_912_017_836_26).abs() < 1e-9);
        // the closed form agrees with the whole marginal, not just the diagonal
        for (a, b) in [(0.3, 2.0), (4.0, 1.1), (5.9, 0.2)] {
            let m = periodic(|c| cop.density([a, b, c]), 512, 0.0);
            assert!((m - spec.density(a, b)).abs() < 1e-8);
        }
    }

    #[test]
    fn pairwise_phi_properties() {
        let r = rho(9.18, -1.17, -0.09);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let p = r.pairwise_phi(i, j).unwrap();
            assert!(p.folded().abs() < 1.0);
            let q = r.scaled(3.0).unwrap().pairwise_phi(i, j).unwrap();
            assert!((p.phi - q.phi).abs() < 1e-12 * p.phi.abs().max(1.0));
            assert_eq!(r.pairwise_phi(j, i).unwrap().phi, p.phi);
        }
        assert!(r.pairwise_phi(1, 1).is_err());
        assert!(PairwiseMarginalSpec::new(0, 1, 1.0).is_err());
        assert!(PairwiseMarginalSpec::new(0, 1, -1.0).is_err());
    }

    #[test]
    fn independence_kernel() {
        let spec = PairwiseMarginalSpec::new(0, 1, 0.0).unwrap();
        for (a, b) in [(0.0, 0.0), (1.0, 4.0), (6.0, 2.0)] {
            assert!((spec.density(a, b) - 1.0 / (TAU * TAU)).abs() < 1e-16);
        }
    }

    #[test]
    fn chain_rule_on_5_grid() {
        for r in reference_sets() {
            let cop = Twcc::new(r).unwrap();
            let g: Vec<f64> = (0..5).map(|k| 0.3 + k as f64 * TAU / 5.0).collect();
            for &a in &g {
                for &b in &g {
                    for &c in &g {
                        let u = [a, b, c];
                        let joint = cop.density(u);
                        for i in 0..3 {
                            let (j, k) = others(i);
                            let split = cop.bivariate_density(j, k, u[j], u[k]).unwrap()
                                * cop.cond_1given2(i, u).unwrap();
                            assert!(((split - joint) / joint).abs() < 1e-10, "{r} i={i} u={u:?}");
                            // t_{2|1} times the uniform marginal of the fixed coordinate
                            assert!((cop.cond_2given1(u) / TAU - joint).abs() < 1e-15);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn conditional_kernels_normalize() {
        for r in reference_sets() {
            let cop = Twcc::new(r).unwrap();
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                for uj in [0.0, 1.7, 4.4] {
                    let v = periodic(|x| cop.cond_1given1(i, j, x, uj).unwrap(), 512, 0.0);
                    assert!((v - 1.0).abs() < 1e-10);
                }
            }
            for i in 0..3 {
                let v = periodic(
                    |x| {
                        let mut u = [2.0, 5.0, 0.4];
                        u[i] = x;
                        cop.cond_1given2(i, u).unwrap()
                    },
                    512,
                    0.0,
                );
                assert!((v - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn uniform_univariate_marginals() {
        for r in reference_sets() {
            let cop = Twcc::new(r).unwrap();
            for k in 0..16 {
                let a = k as f64 * TAU / 16.0;
                let m = periodic(|b| periodic(|c| cop.density([a, b, c]), 64, 0.0), 64, 0.0);
                assert!((m - 1.0 / TAU).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn bivariate_marginal_consistency_on_32_grid() {
        for r in reference_sets() {
            let cop = Twcc::new(r).unwrap();
            for a in 0..32 {
                for b in 0..32 {
                    let (ua, ub) = (a as f64 * TAU / 32.0, b as f64 * TAU / 32.0);
                    let m = periodic(|c| cop.density([ua, ub, c]), 64, 0.0);
                    let t2 = cop.bivariate_density(0, 1, ua, ub).unwrap();
                    assert!((m - t2).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn scaling_invariance_at_random_points() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for r in reference_sets() {
            let base = Twcc::new(r).unwrap();
            for t in [0.5, 2.0, 10.0] {
                let scaled = Twcc::new(r.scaled(t).unwrap()).unwrap();
                for _ in 0..100 {
                    let u = [rng.gen::<f64>() * TAU, rng.gen::<f64>() * TAU, rng.gen::<f64>() * TAU];
                    assert!((base.log_density(u) - scaled.log_density(u)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let cop = Twcc::new(rho(3.0, 3.0, 1.0 / 9.0)).unwrap();
        assert_eq!(cop.sample(50, 7).unwrap(), cop.sample(50, 7).unwrap());
        assert!(cop.sample(0, 7).is_err());
        for u in cop.sample(200, 1).unwrap() {
            assert!(u.iter().all(|x| (0.0..TAU).contains(x)));
        }
    }
}
