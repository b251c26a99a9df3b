//! Univariate marginal families for the TWCM.
//!
//! Circular families live on `[0, 2π)` and use the location `μ` as the
//! origin of their distribution function, so `cdf(μ) = 0`. The parameter-free
//! circular uniform carries an explicit origin instead. Weibull is the only
//! linear family and lives on `(0, ∞)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angle::{circular_mean, wrap, TAU};
use crate::error::{Result, TwcmError};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::quadrature;
use crate::special::{bessel_i0_scaled, bessel_ratio_a1, ln_bessel_i0};

/// Upper bound for the fitted von Mises concentration.
pub const KAPPA_CAP: f64 = 1e6;
/// Upper bound for `|ξ|` of a fitted wrapped Cauchy.
pub const XI_CAP: f64 = 1.0 - 1e-7;
/// Upper bound for `|ρ|` of a fitted cardioid (the family needs `|ρ| < 1/2`).
pub const CARDIOID_CAP: f64 = 0.5 - 1e-7;
/// Upper bound for a fitted Weibull shape.
pub const SHAPE_CAP: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Circular,
    Linear,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Circular => "circular",
            Domain::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Uniform,
    WrappedCauchy,
    VonMises,
    Cardioid,
    Weibull,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Uniform,
        Family::WrappedCauchy,
        Family::VonMises,
        Family::Cardioid,
        Family::Weibull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Uniform => "uniform",
            Family::WrappedCauchy => "wrapped_cauchy",
            Family::VonMises => "von_mises",
            Family::Cardioid => "cardioid",
            Family::Weibull => "weibull",
        }
    }

    pub fn domain(self) -> Domain {
        match self {
            Family::Weibull => Domain::Linear,
            _ => Domain::Circular,
        }
    }

    /// Number of free parameters.
    pub fn param_count(self) -> usize {
        match self {
            Family::Uniform => 0,
            _ => 2,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = TwcmError;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| TwcmError::param(format!("unknown marginal family `{s}`")))
    }
}

/// A fully parameterised marginal law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    CircularUniform { origin: f64 },
    WrappedCauchy { mu: f64, xi: f64 },
    VonMises { mu: f64, kappa: f64 },
    Cardioid { mu: f64, rho: f64 },
    Weibull { shape: f64, scale: f64 },
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(TwcmError::param(format!("{name} must be finite, got {v}")))
    }
}

impl Marginal {
    pub fn uniform() -> Self {
        Marginal::CircularUniform { origin: 0.0 }
    }

    pub fn uniform_with_origin(origin: f64) -> Result<Self> {
        check_finite("origin", origin)?;
        Ok(Marginal::CircularUniform {
            origin: wrap(origin),
        })
    }

    pub fn wrapped_cauchy(mu: f64, xi: f64) -> Result<Self> {
        check_finite("mu", mu)?;
        if !(xi.abs() < 1.0) {
            return Err(TwcmError::param(format!("wrapped Cauchy xi must lie in (-1, 1), got {xi}")));
        }
        Ok(Marginal::WrappedCauchy { mu: wrap(mu), xi })
    }

    pub fn von_mises(mu: f64, kappa: f64) -> Result<Self> {
        check_finite("mu", mu)?;
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(TwcmError::param(format!("von Mises kappa must be >= 0, got {kappa}")));
        }
        Ok(Marginal::VonMises { mu: wrap(mu), kappa })
    }

    pub fn cardioid(mu: f64, rho: f64) -> Result<Self> {
        check_finite("mu", mu)?;
        if !(rho.abs() < 0.5) {
            return Err(TwcmError::param(format!("cardioid rho must lie in (-1/2, 1/2), got {rho}")));
        }
        Ok(Marginal::Cardioid { mu: wrap(mu), rho })
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
            return Err(TwcmError::param(format!(
                "Weibull shape and scale must be positive, got ({shape}, {scale})"
            )));
        }
        Ok(Marginal::Weibull { shape, scale })
    }

    /// Build a marginal from a family tag and its parameters in canonical order
    /// (`[]`, `[mu, xi]`, `[mu, kappa]`, `[mu, rho]`, `[shape, scale]`).
    pub fn from_params(family: Family, params: &[f64]) -> Result<Self> {
        if params.len() != family.param_count() {
            return Err(TwcmError::param(format!(
                "{family} takes {} parameters, got {}",
                family.param_count(),
                params.len()
            )));
        }
        match family {
            Family::Uniform => Ok(Marginal::uniform()),
            Family::WrappedCauchy => Marginal::wrapped_cauchy(params[0], params[1]),
            Family::VonMises => Marginal::von_mises(params[0], params[1]),
            Family::Cardioid => Marginal::cardioid(params[0], params[1]),
            Family::Weibull => Marginal::weibull(params[0], params[1]),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Marginal::CircularUniform { .. } => Family::Uniform,
            Marginal::WrappedCauchy { .. } => Family::WrappedCauchy,
            Marginal::VonMises { .. } => Family::VonMises,
            Marginal::Cardioid { .. } => Family::Cardioid,
            Marginal::Weibull { .. } => Family::Weibull,
        }
    }

    pub fn domain(&self) -> Domain {
        self.family().domain()
    }

    /// Origin of the distribution function; `None` for linear families.
    pub fn origin(&self) -> Option<f64> {
        match *self {
            Marginal::CircularUniform { origin } => Some(origin),
            Marginal::WrappedCauchy { mu, .. }
            | Marginal::VonMises { mu, .. }
            | Marginal::Cardioid { mu, .. } => Some(mu),
            Marginal::Weibull { .. } => None,
        }
    }

    /// Named parameters in canonical order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Marginal::CircularUniform { .. } => vec![],
            Marginal::WrappedCauchy { mu, xi } => vec![("mu", mu), ("xi", xi)],
            Marginal::VonMises { mu, kappa } => vec![("mu", mu), ("kappa", kappa)],
            Marginal::Cardioid { mu, rho } => vec![("mu", mu), ("rho", rho)],
            Marginal::Weibull { shape, scale } => vec![("shape", shape), ("scale", scale)],
        }
    }

    pub fn param_count(&self) -> usize {
        self.family().param_count()
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(TwcmError::domain(format!("non-finite value {x}")));
        }
        if self.domain() == Domain::Linear && x <= 0.0 {
            return Err(TwcmError::domain(format!(
                "{x} is outside the linear domain (0, inf) of {}",
                self.family()
            )));
        }
        Ok(())
    }

    /// Log density. Circular arguments may be any real number.
    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.ln_pdf_unchecked(x))
    }

    pub(crate) fn ln_pdf_unchecked(&self, x: f64) -> f64 {
        match *self {
            Marginal::CircularUniform { .. } => -TAU.ln(),
            Marginal::WrappedCauchy { mu, xi } => wc_ln_pdf(x, mu, xi),
            Marginal::VonMises { mu, kappa } => kappa * (x - mu).cos() - TAU.ln() - ln_bessel_i0(kappa),
            Marginal::Cardioid { mu, rho } => (1.0 + 2.0 * rho * (x - mu).cos()).ln() - TAU.ln(),
            Marginal::Weibull { shape, scale } => {
                let z = x / scale;
                shape.ln() - scale.ln() + (shape - 1.0) * z.ln() - z.powf(shape)
            }
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.ln_pdf(x).map(f64::exp)
    }

    /// Distribution function. Circular families accumulate from their origin,
    /// so the result is in `[0, 1)` for every real `x`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.cdf_unchecked(x))
    }

    pub(crate) fn cdf_unchecked(&self, x: f64) -> f64 {
        match *self {
            Marginal::CircularUniform { origin } => wrap(x - origin) / TAU,
            Marginal::WrappedCauchy { mu, xi } => wc_cdf_offset(wrap(x - mu), xi),
            Marginal::VonMises { mu, kappa } => vm_cdf_offset(wrap(x - mu), kappa),
            Marginal::Cardioid { mu, rho } => cardioid_cdf_offset(wrap(x - mu), rho),
            Marginal::Weibull { shape, scale } => -(-(x / scale).powf(shape)).exp_m1(),
        }
    }

    /// `2π F(x)`: the copula-scale pseudo-observation of `x`.
    pub fn to_copula_scale(&self, x: f64) -> f64 {
        match *self {
            // avoid the divide/multiply round trip on the common closed forms
            Marginal::CircularUniform { origin } => wrap(x - origin),
            Marginal::WrappedCauchy { mu, xi } => {
                let h = 0.5 * wrap(x - mu);
                2.0 * ((1.0 + xi) * h.sin()).atan2((1.0 - xi) * h.cos())
            }
            _ => TAU * self.cdf_unchecked(x),
        }
    }

    /// Right inverse of [`Marginal::cdf`] for `p ∈ [0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(TwcmError::domain(format!("probability {p} outside [0, 1)")));
        }
        Ok(match *self {
            Marginal::CircularUniform { origin } => wrap(origin + TAU * p),
            Marginal::WrappedCauchy { mu, xi } => wrap(mu + wc_quantile_offset(p, xi)),
            Marginal::VonMises { mu, kappa } => wrap(mu + symmetric_quantile_offset(p, |d| vm_cdf_offset(d, kappa), |d| vm_pdf_offset(d, kappa))),
            Marginal::Cardioid { mu, rho } => wrap(
                mu + symmetric_quantile_offset(p, |d| cardioid_cdf_offset(d, rho), |d| {
                    (1.0 + 2.0 * rho * d.cos()) / TAU
                }),
            ),
            Marginal::Weibull { shape, scale } => scale * (-(-p).ln_1p()).powf(1.0 / shape),
        })
    }

    /// Inverse-transform draw from an explicit generator.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p = open_unit(rng);
        // p is in (0, 1) so quantile cannot fail
        self.quantile(p).unwrap_or(f64::NAN)
    }

    /// `n` inverse-transform draws; deterministic given `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }

    /// Sum of log densities.
    pub fn log_likelihood(&self, data: &[f64]) -> Result<f64> {
        data.iter().map(|&x| self.ln_pdf(x)).sum()
    }
}

/// Uniform draw on the open interval `(0, 1)`.
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

// --- wrapped Cauchy building blocks, shared with the copula layer -------------

fn wc_ln_pdf(x: f64, mu: f64, xi: f64) -> f64 {
    (1.0 - xi * xi).ln() - TAU.ln() - (1.0 + xi * xi - 2.0 * xi * (x - mu).cos()).ln()
}

/// CDF of a wrapped Cauchy at offset `d = θ − μ ∈ [0, 2π)` from its origin.
fn wc_cdf_offset(d: f64, xi: f64) -> f64 {
    let h = 0.5 * d;
    ((1.0 + xi) * h.sin()).atan2((1.0 - xi) * h.cos()) / PI
}

/// Möbius map of `p ∈ [0, 1)` to a wrapped Cauchy offset in `[0, 2π)`.
fn wc_quantile_offset(p: f64, xi: f64) -> f64 {
    let a = PI * p;
    2.0 * ((1.0 - xi) * a.sin()).atan2((1.0 + xi) * a.cos())
}

/// Map a real kernel parameter onto `(-1, 1)`; the `|1 - p²|` kernel is
/// unchanged under `p -> 1/p`.
pub fn fold_parameter(p: f64) -> f64 {
    if p.abs() > 1.0 {
        1.0 / p
    } else {
        p
    }
}

/// `(1/2π) |1 - p²| / (1 + p² - 2 p cos(x - center))` for any real `p` with `|p| ≠ 1`.
pub fn wc_kernel(x: f64, center: f64, p: f64) -> f64 {
    (1.0 - p * p).abs() / (TAU * (1.0 + p * p - 2.0 * p * (x - center).cos()))
}

/// Draw from [`wc_kernel`] by the Möbius transform of a uniform.
pub fn wc_kernel_draw<R: Rng + ?Sized>(rng: &mut R, center: f64, p: f64) -> f64 {
    let q = fold_parameter(p);
    wrap(center + wc_quantile_offset(open_unit(rng), q))
}

// --- von Mises ---------------------------------------------------------------

fn vm_pdf_offset(d: f64, kappa: f64) -> f64 {
    (kappa * (d.cos() - 1.0)).exp() / (TAU * bessel_i0_scaled(kappa))
}

fn vm_cdf_offset(d: f64, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return d / TAU;
    }
    let half = |a: f64| quadrature::adaptive(|s| vm_pdf_offset(s, kappa), 0.0, a, 1e-15);
    if d <= PI {
        half(d)
    } else {
        1.0 - half(TAU - d)
    }
}

fn cardioid_cdf_offset(d: f64, rho: f64) -> f64 {
    (d + 2.0 * rho * d.sin()) / TAU
}

/// Quantile offset of a law symmetric about its origin, by safeguarded
/// Newton on `[0, π]` with bisection fallback.
fn symmetric_quantile_offset<C, D>(p: f64, cdf: C, pdf: D) -> f64
where
    C: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if p == 0.0 {
        return 0.0;
    }
    let (target, mirrored) = if p <= 0.5 { (p, false) } else { (1.0 - p, true) };
    let (mut lo, mut hi) = (0.0, PI);
    let mut d = PI * target * 2.0;
    for _ in 0..200 {
        let f = cdf(d) - target;
        if f.abs() < 1e-15 {
            break;
        }
        if f > 0.0 {
            hi = d;
        } else {
            lo = d;
        }
        let slope = pdf(d);
        let mut next = d - f / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - d).abs() < 1e-14 || hi - lo < 1e-14 {
            d = next;
            break;
        }
        d = next;
    }
    if mirrored {
        TAU - d
    } else {
        d
    }
}

// --- maximum likelihood --------------------------------------------------------

/// Outcome of a (weighted) marginal maximum-likelihood fit.
#[derive(Debug, Clone)]
pub struct MarginalFit {
    pub model: Marginal,
    /// Weighted log-likelihood at the estimate.
    pub loglik: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

fn check_weights(data: &[f64], weights: &[f64]) -> Result<f64> {
    if data.is_empty() {
        return Err(TwcmError::EmptyData);
    }
    if weights.len() != data.len() {
        return Err(TwcmError::param(format!(
            "{} weights for {} observations",
            weights.len(),
            data.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(TwcmError::param("weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(TwcmError::param("weights must sum to a positive value"));
    }
    Ok(total)
}

fn weighted_loglik(model: &Marginal, data: &[f64], weights: &[f64]) -> f64 {
    data.iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&x, &w)| w * model.ln_pdf_unchecked(x))
        .sum()
}

/// Unweighted maximum-likelihood fit.
pub fn fit_mle(family: Family, data: &[f64]) -> Result<MarginalFit> {
    fit_mle_weighted(family, data, &vec![1.0; data.len()])
}

/// Weighted maximum-likelihood fit of `family` to `data`.
pub fn fit_mle_weighted(family: Family, data: &[f64], weights: &[f64]) -> Result<MarginalFit> {
    let total = check_weights(data, weights)?;
    let model = Marginal::uniform();
    for &x in data {
        match family {
            Family::Weibull => Marginal::weibull(1.0, 1.0)?.check_domain(x)?,
            _ => model.check_domain(x)?,
        }
    }
    let mut warnings = Vec::new();
    let (model, converged) = match family {
        Family::Uniform => (Marginal::uniform(), true),
        Family::VonMises => {
            let (mu, rbar) = circular_mean(data, weights);
            let kappa = solve_a1(rbar, &mut warnings);
            (Marginal::von_mises(mu, kappa)?, true)
        }
        Family::WrappedCauchy => fit_located(
            data,
            weights,
            total,
            XI_CAP,
            |mu, c| Marginal::WrappedCauchy { mu: wrap(mu), xi: c },
            &mut warnings,
        )?,
        Family::Cardioid => fit_located(
            data,
            weights,
            total,
            CARDIOID_CAP,
            |mu, c| Marginal::Cardioid { mu: wrap(mu), rho: c },
            &mut warnings,
        )?,
        Family::Weibull => fit_weibull(data, weights, &mut warnings)?,
    };
    let loglik = weighted_loglik(&model, data, weights);
    Ok(MarginalFit {
        model,
        loglik,
        converged,
        warnings,
    })
}

/// Solve `A1(κ) = R̄` by Newton from the usual R̄-based approximation.
fn solve_a1(rbar: f64, warnings: &mut Vec<String>) -> f64 {
    if rbar <= 1e-12 {
        return 0.0;
    }
    if rbar >= bessel_ratio_a1(KAPPA_CAP) {
        warnings.push(format!(
            "data are (nearly) identical: von Mises kappa capped at {KAPPA_CAP:e}"
        ));
        return KAPPA_CAP;
    }
    let mut kappa = rbar * (2.0 - rbar * rbar) / (1.0 - rbar * rbar);
    for _ in 0..100 {
        let a = bessel_ratio_a1(kappa);
        let slope = 1.0 - a / kappa - a * a;
        let step = (a - rbar) / slope;
        let mut next = kappa - step;
        if !(next > 0.0) || !next.is_finite() {
            next = 0.5 * kappa;
        }
        let done = (next - kappa).abs() <= 1e-14 * kappa.max(1.0);
        kappa = next.min(KAPPA_CAP);
        if done {
            break;
        }
    }
    kappa
}

/// Fit a symmetric location/concentration family by Nelder–Mead over
/// `(μ, atanh(c / cap_scale))`, then canonicalise to `c >= 0`.
fn fit_located<M>(
    data: &[f64],
    weights: &[f64],
    total: f64,
    cap: f64,
    make: M,
    warnings: &mut Vec<String>,
) -> Result<(Marginal, bool)>
where
    M: Fn(f64, f64) -> Marginal,
{
    // cardioid concentration lives on (-1/2, 1/2): scale to (-1, 1) first
    let scale = if cap < 0.5 { 0.5 } else { 1.0 };
    let t_cap = (cap / scale).atanh();
    let (mu0, rbar) = circular_mean(data, weights);
    let c0 = rbar.clamp(0.01, 0.95 * cap);
    let objective = |x: &[f64]| {
        let c = scale * x[1].clamp(-t_cap, t_cap).tanh();
        let model = make(x[0], c);
        -weighted_loglik(&model, data, weights) / total
    };
    let opts = NelderMeadOptions {
        max_iterations: 4000,
        x_tolerance: 1e-10,
        f_tolerance: 1e-14,
        initial_step: 0.1,
    };
    let m = nelder_mead(objective, &[mu0, (c0 / scale).atanh()], &opts);
    let t = m.x[1].clamp(-t_cap, t_cap);
    if t.abs() >= t_cap - 1e-9 {
        warnings.push(format!("concentration reached the cap {cap}; data are degenerate"));
    }
    let mut mu = m.x[0];
    let mut c = scale * t.tanh();
    if c.abs() < cap * (1.0 - 1e-6) {
        // the simplex resolves the optimum only to ~sqrt(eps); finish on the score
        let probe = make(0.0, 0.0);
        let score = |p: [f64; 2]| located_score(&probe, p, data, weights);
        let [pm, pc] = newton_polish(score, [mu, c]);
        let before = weighted_loglik(&make(mu, c), data, weights);
        if pc.abs() < cap && weighted_loglik(&make(pm, pc), data, weights) >= before - 1e-9 * before.abs() {
            mu = pm;
            c = pc;
        }
    }
    if c < 0.0 {
        mu += PI;
        c = -c;
    }
    Ok((make(mu, c), m.converged))
}

/// Weighted score of a wrapped Cauchy or cardioid log-likelihood in `(μ, c)`.
fn located_score(kind: &Marginal, p: [f64; 2], data: &[f64], weights: &[f64]) -> [f64; 2] {
    let [mu, c] = p;
    let mut g = [0.0, 0.0];
    for (&x, &w) in data.iter().zip(weights) {
        let (s, co) = (x - mu).sin_cos();
        match kind {
            Marginal::WrappedCauchy { .. } => {
                let d = 1.0 + c * c - 2.0 * c * co;
                g[0] += w * 2.0 * c * s / d;
                g[1] += w * (-2.0 * c / (1.0 - c * c) - (2.0 * c - 2.0 * co) / d);
            }
            _ => {
                let e = 1.0 + 2.0 * c * co;
                g[0] += w * 2.0 * c * s / e;
                g[1] += w * 2.0 * co / e;
            }
        }
    }
    g
}

/// Newton iterations on a 2-parameter score with a finite-difference Jacobian;
/// a step is kept only if it reduces the score norm.
fn newton_polish<G: Fn([f64; 2]) -> [f64; 2]>(score: G, x0: [f64; 2]) -> [f64; 2] {
    let norm = |g: [f64; 2]| g[0].hypot(g[1]);
    let mut x = x0;
    let mut g = score(x);
    for _ in 0..30 {
        let h = 1e-6;
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut up = x;
            let mut dn = x;
            up[k] += h;
            dn[k] -= h;
            let (gu, gd) = (score(up), score(dn));
            jac[0][k] = (gu[0] - gd[0]) / (2.0 * h);
            jac[1][k] = (gu[1] - gd[1]) / (2.0 * h);
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let step = [
            (jac[1][1] * g[0] - jac[0][1] * g[1]) / det,
            (jac[0][0] * g[1] - jac[1][0] * g[0]) / det,
        ];
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let cand = [x[0] - t * step[0], x[1] - t * step[1]];
            let gc = score(cand);
            if norm(gc) < norm(g) {
                x = cand;
                g = gc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || step[0].hypot(step[1]) < 1e-15 {
            break;
        }
    }
    x
}

fn fit_weibull(data: &[f64], weights: &[f64], warnings: &mut Vec<String>) -> Result<(Marginal, bool)> {
    let xmax = data.iter().cloned().fold(0.0, f64::max);
    let logs: Vec<f64> = data.iter().map(|&x| (x / xmax).ln()).collect();
    let total: f64 = weights.iter().sum();
    let mean_log = logs.iter().zip(weights).map(|(l, w)| l * w).sum::<f64>() / total;

    // profile score g(ν) = 1/ν + mean ln y − Σ w y^ν ln y / Σ w y^ν, decreasing in ν
    let moments = |nu: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (&l, &w) in logs.iter().zip(weights) {
            let e = w * (nu * l).exp();
            s0 += e;
            s1 += e * l;
            s2 += e * l * l;
        }
        (s0, s1, s2)
    };
    let score = |nu: f64| {
        let (s0, s1, s2) = moments(nu);
        let g = 1.0 / nu + mean_log - s1 / s0;
        let dg = -1.0 / (nu * nu) - (s2 / s0 - (s1 / s0).powi(2));
        (g, dg)
    };

    let spread = logs
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(l, _)| (l - mean_log).abs())
        .fold(0.0, f64::max);
    let nu = if spread < 1e-12 {
        warnings.push(format!("identical linear data: Weibull shape capped at {SHAPE_CAP}"));
        SHAPE_CAP
    } else {
        let mut lo = 1e-3;
        while score(lo).0 <= 0.0 && lo > 1e-12 {
            lo *= 0.1;
        }
        let mut hi = 1.0;
        while score(hi).0 > 0.0 && hi < SHAPE_CAP {
            hi *= 2.0;
        }
        let mut nu = 0.5 * (lo + hi.min(SHAPE_CAP));
        for _ in 0..200 {
            let (g, dg) = score(nu);
            if g > 0.0 {
                lo = nu;
            } else {
                hi = nu;
            }
            let mut next = nu - g / dg;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let done = (next - nu).abs() <= 1e-14 * nu;
            nu = next;
            if done || hi - lo <= 1e-15 * hi {
                break;
            }
        }
        nu.min(SHAPE_CAP)
    };
    let (s0, _, _) = moments(nu);
    let scale = xmax * (s0 / total).powf(1.0 / nu);
    Ok((Marginal::weibull(nu, scale)?, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_models() -> Vec<Marginal> {
        vec![
            Marginal::uniform_with_origin(1.0).unwrap(),
            Marginal::wrapped_cauchy(2.0, 0.7).unwrap(),
            Marginal::wrapped_cauchy(0.3, -0.4).unwrap(),
            Marginal::von_mises(1.93, 27.6).unwrap(),
            Marginal::von_mises(6.23, 84.4).unwrap(),
            Marginal::von_mises(4.0, 0.5).unwrap(),
            Marginal::cardioid(5.0, 0.3).unwrap(),
            Marginal::weibull(1.5, 2.0).unwrap(),
            Marginal::weibull(3.2, 0.7).unwrap(),
        ]
    }

    #[test]
    fn uniform_reductions() {
        let vm = Marginal::von_mises(0.0, 0.0).unwrap();
        let wc = Marginal::wrapped_cauchy(1.3, 0.0).unwrap();
        for x in [0.0, 1.0, 3.0, 6.0] {
            assert!((vm.pdf(x).unwrap() - 1.0 / TAU).abs() < 1e-15);
            assert!((wc.pdf(x).unwrap() - 1.0 / TAU).abs() < 1e-15);
            assert!((wc.cdf(x).unwrap() - wrap(x - 1.3) / TAU).abs() < 1e-14);
        }
        let exp = Marginal::weibull(1.0, 2.0).unwrap();
        assert!((exp.pdf(3.0).unwrap() - 0.5 * (-1.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn cdf_landmarks() {
        let wc = Marginal::wrapped_cauchy(2.0, 0.6).unwrap();
        assert!((wc.cdf(2.0 + PI).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(wc.quantile(0.0).unwrap(), 2.0);
        assert!((wc.quantile(0.5).unwrap() - (2.0 + PI)).abs() < 1e-14);
        let wb = Marginal::weibull(2.5, 1.7).unwrap();
        assert!((wb.cdf(1.7).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let wb = Marginal::weibull(2.0, 1.0).unwrap();
        assert!((wb.quantile(1.0 - (-1.0f64).exp()).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cdf_starts_at_origin_and_approaches_one() {
        for m in all_models().into_iter().filter(|m| m.domain() == Domain::Circular) {
            let c = m.origin().unwrap();
            assert!(m.cdf(c).unwrap().abs() < 1e-15, "{m:?}");
            assert!(m.cdf(c - 1e-9).unwrap() > 1.0 - 1e-6, "{m:?}");
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        for m in all_models() {
            let total = match m {
                Marginal::Weibull { shape, scale } => {
                    let upper = scale * (-(1e-16f64).ln()).powf(1.0 / shape);
                    quadrature::adaptive(|x| m.pdf(x).unwrap_or(0.0), 1e-300, upper, 1e-13)
                }
                Marginal::VonMises { kappa, mu } if kappa > 20.0 => {
                    // the 512-point rule under-resolves very sharp peaks
                    quadrature::adaptive(|x| m.pdf(x).unwrap(), mu - PI, mu + PI, 1e-13)
                }
                _ => quadrature::periodic(|x| m.pdf(x).unwrap(), 512, 0.0),
            };
            assert!((total - 1.0).abs() < 1e-8, "{m:?}: {total}");
        }
    }

    #[test]
    fn cdf_derivative_is_pdf() {
        for m in all_models() {
            for k in 1..=100 {
                let x = match m.domain() {
                    Domain::Circular => m.origin().unwrap() + TAU * k as f64 / 101.0,
                    Domain::Linear => 0.05 * k as f64,
                };
                let h = 1e-5;
                let fd = (m.cdf(x + h).unwrap() - m.cdf(x - h).unwrap()) / (2.0 * h);
                let p = m.pdf(x).unwrap();
                assert!((fd - p).abs() <= 1e-6 * p.max(1e-3), "{m:?} at {x}: {fd} vs {p}");
            }
        }
    }

    #[test]
    fn quantile_domain_errors() {
        let m = Marginal::von_mises(0.0, 1.0).unwrap();
        assert!(m.quantile(1.0).is_err());
        assert!(m.quantile(-0.1).is_err());
        let w = Marginal::weibull(1.0, 1.0).unwrap();
        assert!(matches!(w.pdf(-1.0), Err(TwcmError::Domain(_))));
        assert!(w.pdf(0.0).is_err());
    }

    #[test]
    fn constructors_reject_bad_parameters() {
        assert!(Marginal::wrapped_cauchy(0.0, 1.0).is_err());
        assert!(Marginal::von_mises(0.0, -1.0).is_err());
        assert!(Marginal::cardioid(0.0, 0.5).is_err());
        assert!(Marginal::weibull(0.0, 1.0).is_err());
        assert!(Marginal::from_params(Family::VonMises, &[1.0]).is_err());
        assert_eq!("von_mises".parse::<Family>().unwrap(), Family::VonMises);
        assert!("kato_jones".parse::<Family>().is_err());
    }

    #[test]
    fn uniform_fit_loglik() {
        let data = [0.1, 2.0, 5.0, 3.3];
        let fit = fit_mle(Family::Uniform, &data).unwrap();
        assert_eq!(fit.model.family(), Family::Uniform);
        assert!((fit.loglik + 4.0 * TAU.ln()).abs() < 1e-12);
    }

    #[test]
    fn von_mises_recovery() {
        let truth = Marginal::von_mises(1.93, 27.6).unwrap();
        let data = truth.sample(2000, 11);
        let fit = fit_mle(Family::VonMises, &data).unwrap();
        let Marginal::VonMises { mu, kappa } = fit.model else { panic!() };
        assert!((mu - 1.93).abs() < 0.013, "{mu}");
        assert!((kappa - 27.6).abs() < 3.0, "{kappa}");
        assert!(fit.loglik >= truth.log_likelihood(&data).unwrap());
    }

    #[test]
    fn fits_beat_truth_for_every_family() {
        let truths = [
            Marginal::wrapped_cauchy(4.4, 0.8).unwrap(),
            Marginal::von_mises(0.2, 3.0).unwrap(),
            Marginal::cardioid(2.5, 0.35).unwrap(),
            Marginal::weibull(3.2, 1.8).unwrap(),
            Marginal::uniform(),
        ];
        for truth in truths {
            let data = truth.sample(1500, 5);
            let fit = fit_mle(truth.family(), &data).unwrap();
            let at_truth = truth.log_likelihood(&data).unwrap();
            assert!(fit.loglik >= at_truth - 1e-9, "{truth:?}: {} < {at_truth}", fit.loglik);
            for ((_, a), (_, b)) in fit.model.params().iter().zip(truth.params()) {
                assert!((a - b).abs() < 0.15 * b.abs().max(1.0), "{truth:?} -> {:?}", fit.model);
            }
        }
    }

    #[test]
    fn weight_scale_invariance() {
        for truth in [
            Marginal::wrapped_cauchy(1.0, 0.5).unwrap(),
            Marginal::von_mises(3.0, 2.0).unwrap(),
            Marginal::cardioid(1.0, 0.2).unwrap(),
            Marginal::weibull(2.0, 3.0).unwrap(),
        ] {
            let data = truth.sample(300, 2);
            let a = fit_mle(truth.family(), &data).unwrap();
            let b = fit_mle_weighted(truth.family(), &data, &vec![2.0; data.len()]).unwrap();
            for ((_, x), (_, y)) in a.model.params().iter().zip(b.model.params()) {
                assert!((x - y).abs() < 1e-12, "{truth:?}");
            }
        }
    }

    #[test]
    fn integer_weights_match_replication() {
        for truth in [
            Marginal::wrapped_cauchy(1.0, 0.5).unwrap(),
            Marginal::von_mises(3.0, 2.0).unwrap(),
            Marginal::cardioid(1.0, 0.2).unwrap(),
            Marginal::weibull(2.0, 3.0).unwrap(),
        ] {
            let data = truth.sample(200, 9);
            let weights: Vec<f64> = (0..data.len()).map(|i| (i % 3) as f64 + 1.0).collect();
            let replicated: Vec<f64> = data
                .iter()
                .zip(&weights)
                .flat_map(|(&x, &w)| std::iter::repeat(x).take(w as usize))
                .collect();
            let a = fit_mle_weighted(truth.family(), &data, &weights).unwrap();
            let b = fit_mle(truth.family(), &replicated).unwrap();
            for ((_, x), (_, y)) in a.model.params().iter().zip(b.model.params()) {
                assert!((x - y).abs() < 1e-8, "{truth:?}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn identical_circular_data_hits_the_cap() {
        let data = vec![1.0; 50];
        let vm = fit_mle(Family::VonMises, &data).unwrap();
        assert!(!vm.warnings.is_empty());
        assert!(matches!(vm.model, Marginal::VonMises { kappa, .. } if kappa == KAPPA_CAP));
        let wc = fit_mle(Family::WrappedCauchy, &data).unwrap();
        assert!(!wc.warnings.is_empty());
    }

    #[test]
    fn weighted_fit_input_errors() {
        assert!(matches!(fit_mle(Family::VonMises, &[]), Err(TwcmError::EmptyData)));
        assert!(fit_mle_weighted(Family::VonMises, &[1.0, 2.0], &[1.0]).is_err());
        assert!(fit_mle_weighted(Family::VonMises, &[1.0, 2.0], &[0.0, 0.0]).is_err());
        assert!(fit_mle(Family::Weibull, &[1.0, -2.0]).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = Marginal::von_mises(1.0, 4.0).unwrap();
        assert_eq!(m.sample(100, 42), m.sample(100, 42));
        assert_ne!(m.sample(100, 42), m.sample(100, 43));
    }

    #[test]
    fn kernel_fold_is_density_preserving() {
        for p in [-7.0, -0.3, 0.2, 3.5] {
            for x in [0.0, 1.0, 2.5, 5.0] {
                let a = wc_kernel(x, 0.7, p);
                let b = wc_kernel(x, 0.7, fold_parameter(p));
                assert!((a - b).abs() < 1e-14 * a);
            }
        }
    }
}
