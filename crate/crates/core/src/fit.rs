//! Two-step (IFM) maximum likelihood, bootstrap standard errors and
//! information criteria.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angle::{circular_sd, TAU};
use crate::copula::RhoVector;
use crate::error::{Result, TwcmError};
use crate::marginals::{fit_mle_weighted, fold_parameter, Family, Marginal};
use crate::model::{ModelJson, Observation, TwcmModel};
use crate::optim::{nelder_mead, NelderMeadOptions};

/// `|ρ|` above which a fit is reported as sitting on a large-ρ plateau.
pub const NEAR_LIMIT: f64 = 1e3;
/// Search box on each log-magnitude.
const LOG_BOUND: f64 = 25.0;
const PENALTY: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Simplex starts per sign pattern.
    pub restarts: usize,
    pub bootstrap_replicates: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            tolerance: 1e-8,
            restarts: 3,
            bootstrap_replicates: 1000,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.restarts == 0 || self.bootstrap_replicates == 0 {
            return Err(TwcmError::param("iteration, restart and replicate counts must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(TwcmError::param(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }

    fn simplex_options(&self) -> NelderMeadOptions {
        NelderMeadOptions {
            max_iterations: self.max_iterations,
            x_tolerance: self.tolerance,
            f_tolerance: 1e-10,
            initial_step: 0.5,
        }
    }
}

/// Signs of `(ρ12, ρ13, ρ23)`; only patterns with a positive product occur.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignPattern {
    #[serde(rename = "+++")]
    PlusPlusPlus,
    #[serde(rename = "+--")]
    PlusMinusMinus,
    #[serde(rename = "-+-")]
    MinusPlusMinus,
    #[serde(rename = "--+")]
    MinusMinusPlus,
}

impl SignPattern {
    pub const ALL: [SignPattern; 4] = [
        SignPattern::PlusPlusPlus,
        SignPattern::PlusMinusMinus,
        SignPattern::MinusPlusMinus,
        SignPattern::MinusMinusPlus,
    ];

    pub fn signs(self) -> [f64; 3] {
        match self {
            SignPattern::PlusPlusPlus => [1.0, 1.0, 1.0],
            SignPattern::PlusMinusMinus => [1.0, -1.0, -1.0],
            SignPattern::MinusPlusMinus => [-1.0, 1.0, -1.0],
            SignPattern::MinusMinusPlus => [-1.0, -1.0, 1.0],
        }
    }

    pub fn of(rho: &RhoVector) -> Option<Self> {
        let s = rho.as_array().map(f64::signum);
        Self::ALL.into_iter().find(|p| p.signs() == s)
    }

    fn rho(self, a: f64, b: f64) -> [f64; 3] {
        let s = self.signs();
        [s[0] * a.exp(), s[1] * b.exp(), s[2] * (-a - b).exp()]
    }
}

impl fmt::Display for SignPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.signs().iter().map(|&x| if x > 0.0 { '+' } else { '-' }).collect();
        f.write_str(&s)
    }
}

/// Outcome of the copula step.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaFit {
    pub rho: RhoVector,
    /// `Σ w_m ln t(u_m; ρ)`.
    pub loglik: f64,
    pub converged: bool,
    pub sign_pattern: SignPattern,
    pub iterations: usize,
    pub near_limit: bool,
    pub diagnostics: Vec<String>,
}

/// Pseudo-observations reduced to what the copula likelihood needs.
struct CopulaData {
    cos: Vec<[f64; 3]>,
    weights: Vec<f64>,
    total: f64,
}

impl CopulaData {
    fn new(u: &[[f64; 3]], weights: &[f64]) -> Self {
        let cos = u
            .iter()
            .map(|u| [(u[0] - u[1]).cos(), (u[0] - u[2]).cos(), (u[1] - u[2]).cos()])
            .collect();
        Self {
            cos,
            weights: weights.to_vec(),
            total: weights.iter().sum(),
        }
    }

    fn loglik(&self, rho: &RhoVector) -> Option<f64> {
        let k = rho.constants().ok()?;
        let r = rho.as_array();
        let mut acc = 0.0;
        for (c, w) in self.cos.iter().zip(&self.weights) {
            let b = k.c1 + 2.0 * (r[0] * c[0] + r[1] * c[1] + r[2] * c[2]);
            if !(b > 0.0) {
                return None;
            }
            acc += w * b.ln();
        }
        Some(self.total * k.c2.ln() - acc)
    }

    /// Negative log-likelihood plus a graded penalty outside the feasible set.
    fn objective(&self, pattern: SignPattern, x: &[f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        let excess = [a.abs(), b.abs(), (a + b).abs()]
            .iter()
            .map(|v| (v - LOG_BOUND).max(0.0))
            .sum::<f64>();
        if excess > 0.0 {
            return PENALTY * (1.0 + excess);
        }
        let [r12, r13, r23] = pattern.rho(a, b);
        let Ok(rho) = RhoVector::new(r12, r13, r23) else {
            return PENALTY * 2.0;
        };
        let margin = rho.validate().margin();
        if !(margin > 0.0) {
            return PENALTY * (1.0 - margin);
        }
        match self.loglik(&rho) {
            Some(ll) => -ll,
            None => PENALTY,
        }
    }
}

/// Structured starting points in `(ln|ρ12|, ln|ρ13|)`: one per permutation
/// of the validity condition.
const STARTS: [[f64; 2]; 3] = [
    [std::f64::consts::LN_2, std::f64::consts::LN_2],
    [std::f64::consts::LN_2, -2.0 * std::f64::consts::LN_2],
    [-2.0 * std::f64::consts::LN_2, std::f64::consts::LN_2],
];

/// Maximum likelihood for `ρ` from pseudo-observations on `[0, 2π)³`.
pub fn fit_copula(u: &[[f64; 3]], config: &FitConfig) -> Result<CopulaFit> {
    fit_copula_weighted(u, &vec![1.0; u.len()], config, None)
}

/// Weighted copula MLE. With `warm_start`, only that start's sign pattern is
/// searched, from that point (used inside EM).
pub fn fit_copula_weighted(
    u: &[[f64; 3]],
    weights: &[f64],
    config: &FitConfig,
    warm_start: Option<&RhoVector>,
) -> Result<CopulaFit> {
    config.validate()?;
    if u.is_empty() {
        return Err(TwcmError::EmptyData);
    }
    if weights.len() != u.len() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(TwcmError::param("weights must be finite, nonnegative and match the data length"));
    }
    let data = CopulaData::new(u, weights);
    let opts = config.simplex_options();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0xc0);

    let mut runs: Vec<(SignPattern, Vec<f64>)> = Vec::new();
    match warm_start.and_then(|r| SignPattern::of(r).map(|p| (p, r))) {
        Some((pattern, r)) => {
            let r = r.normalized()?;
            runs.push((pattern, vec![r.rho12().abs().ln(), r.rho13().abs().ln()]));
        }
        None => {
            for pattern in SignPattern::ALL {
                for r in 0..config.restarts {
                    let mut x = STARTS[r % 3].to_vec();
                    if r >= 3 {
                        x.iter_mut().for_each(|v| *v += rng.gen_range(-1.0..1.0));
                    }
                    runs.push((pattern, x));
                }
            }
        }
    }

    let mut best: Option<(SignPattern, crate::optim::Minimum)> = None;
    let mut iterations = 0;
    for (pattern, x0) in runs {
        let f = |x: &[f64]| data.objective(pattern, x);
        let mut m = nelder_mead(f, &x0, &opts);
        iterations += m.iterations;
        // a second pass from the optimum guards against premature simplex collapse
        if m.value < PENALTY {
            let again = nelder_mead(f, &m.x, &opts);
            iterations += again.iterations;
            if again.value <= m.value {
                m = again;
            }
        }
        if best.as_ref().map_or(true, |(_, b)| m.value < b.value) {
            best = Some((pattern, m));
        }
    }
    let (pattern, m) = best.expect("at least one start");
    let [r12, r13, r23] = pattern.rho(m.x[0], m.x[1]);
    let candidate = RhoVector::new(r12, r13, r23)?;
    if m.value >= PENALTY || !candidate.is_valid() {
        return Err(TwcmError::FitFailure {
            reason: "no valid rho found across the four sign patterns".into(),
            best: Some(candidate),
        });
    }
    let rho = candidate.normalized()?;
    let loglik = data.loglik(&rho).ok_or_else(|| TwcmError::FitFailure {
        reason: "copula likelihood degenerate at the optimum".into(),
        best: Some(rho),
    })?;

    let near_limit = rho.as_array().iter().any(|r| r.abs() > NEAR_LIMIT);
    let mut diagnostics = Vec::new();
    if near_limit {
        diagnostics.push(format!("rho {rho} exceeds {NEAR_LIMIT} in magnitude (near-limit plateau)"));
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        if let Ok(spec) = rho.pairwise_phi(i, j) {
            if (1.0 - fold_parameter(spec.phi).abs()) < 1e-9 {
                diagnostics.push(format!("phi_{}{} is within 1e-9 of the unit circle", i + 1, j + 1));
            }
        }
    }
    if !m.converged {
        diagnostics.push("copula simplex search hit the iteration limit".into());
    }
    Ok(CopulaFit {
        rho,
        loglik,
        converged: m.converged,
        sign_pattern: pattern,
        iterations,
        near_limit,
        diagnostics,
    })
}

/// `(AIC, BIC) = (−2ℓ + 2p, −2ℓ + p ln n)`.
pub fn information_criteria(loglik: f64, p: usize, n: usize) -> (f64, f64) {
    let p = p as f64;
    (-2.0 * loglik + 2.0 * p, -2.0 * loglik + p * (n as f64).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: TwcmModel,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub p: usize,
    pub n: usize,
    pub converged: bool,
    pub sign_pattern: SignPattern,
    pub iterations: usize,
    pub near_limit: bool,
    /// Copula part of the log-likelihood.
    pub copula_loglik: f64,
    pub diagnostics: Vec<String>,
}

/// IFM: marginal MLE per coordinate, then copula MLE on the pseudo-observations.
pub fn fit_ifm(data: &[Observation], families: [Family; 3], config: &FitConfig) -> Result<FitResult> {
    fit_ifm_weighted(data, &vec![1.0; data.len()], families, config, None)
}

/// Weighted IFM; `warm_start` is passed to the copula step.
pub fn fit_ifm_weighted(
    data: &[Observation],
    weights: &[f64],
    families: [Family; 3],
    config: &FitConfig,
    warm_start: Option<&RhoVector>,
) -> Result<FitResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(TwcmError::EmptyData);
    }
    if weights.len() != data.len() {
        return Err(TwcmError::param("weights must match the data length"));
    }
    let mut diagnostics = Vec::new();
    let mut marginals = [Marginal::uniform(); 3];
    let mut converged = true;
    for k in 0..3 {
        let column: Vec<f64> = data.iter().map(|o| o[k]).collect();
        let fit = fit_mle_weighted(families[k], &column, weights)
            .map_err(|e| TwcmError::domain(format!("coordinate {}: {e}", k + 1)))?;
        converged &= fit.converged;
        diagnostics.extend(fit.warnings.iter().map(|w| format!("coordinate {}: {w}", k + 1)));
        marginals[k] = fit.model;
    }
    let u: Vec<[f64; 3]> = data
        .iter()
        .map(|o| [0, 1, 2].map(|k| marginals[k].to_copula_scale(o[k])))
        .collect();
    let cop = fit_copula_weighted(&u, weights, config, warm_start)?;
    diagnostics.extend(cop.diagnostics.iter().cloned());
    let model = TwcmModel::new(cop.rho, marginals)?;
    let loglik: f64 = model
        .log_densities(data)?
        .iter()
        .zip(weights)
        .map(|(l, w)| l * w)
        .sum();
    let p = model.free_params();
    let (aic, bic) = information_criteria(loglik, p, data.len());
    Ok(FitResult {
        model,
        loglik,
        aic,
        bic,
        p,
        n: data.len(),
        converged: converged && cop.converged,
        sign_pattern: cop.sign_pattern,
        iterations: cop.iterations,
        near_limit: cop.near_limit,
        copula_loglik: cop.loglik,
        diagnostics,
    })
}

/// The `fit` block of a serialized fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitBlock {
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub p: usize,
    pub converged: bool,
    pub sign_pattern: SignPattern,
    pub n: usize,
    #[serde(default)]
    pub near_limit: bool,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

/// Model JSON plus a `fit` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitJson {
    #[serde(flatten)]
    pub model: ModelJson,
    pub fit: FitBlock,
}

impl FitResult {
    pub fn to_json_value(&self) -> FitJson {
        FitJson {
            model: ModelJson::from(self.model.clone()),
            fit: FitBlock {
                loglik: self.loglik,
                aic: self.aic,
                bic: self.bic,
                p: self.p,
                converged: self.converged,
                sign_pattern: self.sign_pattern,
                n: self.n,
                near_limit: self.near_limit,
                diagnostics: self.diagnostics.clone(),
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json_value())?)
    }
}

/// Names of the fitted parameters in the order used by [`parameter_vector`].
pub fn parameter_names(families: [Family; 3]) -> Vec<String> {
    let mut names = vec!["rho12".to_string(), "rho13".into(), "rho23".into()];
    for (k, fam) in families.iter().enumerate() {
        let probe = default_marginal(*fam);
        names.extend(probe.params().iter().map(|(n, _)| format!("{n}{}", k + 1)));
    }
    names
}

fn default_marginal(family: Family) -> Marginal {
    match family {
        Family::Uniform => Marginal::uniform(),
        Family::WrappedCauchy => Marginal::WrappedCauchy { mu: 0.0, xi: 0.5 },
        Family::VonMises => Marginal::VonMises { mu: 0.0, kappa: 1.0 },
        Family::Cardioid => Marginal::Cardioid { mu: 0.0, rho: 0.25 },
        Family::Weibull => Marginal::Weibull { shape: 1.0, scale: 1.0 },
    }
}

/// `(ρ12, ρ13, ρ23, marginal parameters...)` of a model.
pub fn parameter_vector(model: &TwcmModel) -> Vec<f64> {
    let mut v = model.rho().as_array().to_vec();
    for m in model.marginals() {
        v.extend(m.params().iter().map(|(_, x)| *x));
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSe {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    /// Location angle; its SE is a circular standard deviation.
    pub circular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub parameters: Vec<ParameterSe>,
    pub requested: usize,
    pub succeeded: usize,
    pub failed: usize,
    /// Fewer than two successful replicates: every SE is zero.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

impl BootstrapResult {
    pub fn get(&self, name: &str) -> Option<&ParameterSe> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// Nonparametric bootstrap standard errors over `config.bootstrap_replicates`
/// resamples, each refitted by IFM. Failed replicates are dropped and counted.
pub fn bootstrap_se(data: &[Observation], families: [Family; 3], config: &FitConfig) -> Result<BootstrapResult> {
    config.validate()?;
    let point = fit_ifm(data, families, config)?;
    let names = parameter_names(families);
    let circular: Vec<bool> = names.iter().map(|n| n.starts_with("mu")).collect();
    let n = data.len();
    let b = config.bootstrap_replicates;

    let mut draws: Vec<Vec<f64>> = Vec::with_capacity(b);
    let mut failed = 0;
    let mut resample = Vec::with_capacity(n);
    for rep in 0..b {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(rep as u64 + 1);
        resample.clear();
        resample.extend((0..n).map(|_| data[rng.gen_range(0..n)]));
        match fit_ifm(&resample, families, config) {
            Ok(fit) => draws.push(parameter_vector(&fit.model)),
            Err(_) => failed += 1,
        }
    }

    let succeeded = draws.len();
    let degenerate = succeeded < 2;
    let estimate = parameter_vector(&point.model);
    let parameters = names
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let column: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            let se = if degenerate {
                0.0
            } else if circular[i] {
                circular_sd(&column)
            } else {
                let m = column.iter().sum::<f64>() / column.len() as f64;
                let ss: f64 = column.iter().map(|x| (x - m).powi(2)).sum();
                (ss / (column.len() - 1) as f64).sqrt()
            };
            ParameterSe {
                name,
                estimate: estimate[i],
                se,
                circular: circular[i],
            }
        })
        .collect();

    let mut warnings = Vec::new();
    if failed * 10 > b {
        warnings.push(format!("{failed} of {b} bootstrap replicates failed to fit"));
    }
    if degenerate {
        warnings.push(format!("only {succeeded} successful replicate(s); standard errors are degenerate"));
    }
    Ok(BootstrapResult {
        parameters,
        requested: b,
        succeeded,
        failed,
        degenerate,
        warnings,
    })
}

/// Copula log-likelihood of the independence limit, `−3 n ln 2π`.
pub fn independence_copula_loglik(total_weight: f64) -> f64 {
    -3.0 * total_weight * TAU.ln()
}
