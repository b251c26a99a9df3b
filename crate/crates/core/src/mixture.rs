//! Finite mixtures of TWCM components fitted by EM with an IFM M-step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TwcmError};
use crate::fit::{fit_ifm_weighted, information_criteria, FitConfig};
use crate::marginals::Family;
use crate::model::{ModelJson, Observation, TwcmModel};

/// Floor applied to densities and responsibilities before taking logs.
pub const RESPONSIBILITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MixtureJson", try_from = "MixtureJson")]
pub struct MixtureModel {
    weights: Vec<f64>,
    components: Vec<TwcmModel>,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl MixtureModel {
    /// Weights must be positive; they are rescaled to sum to one.
    pub fn new(weights: Vec<f64>, components: Vec<TwcmModel>) -> Result<Self> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(TwcmError::param(format!(
                "need K >= 1 components with one weight each (got {} weights, {} components)",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(TwcmError::param(format!("mixture weights must be positive, got {weights:?}")));
        }
        let families = components[0].families();
        if components.iter().any(|c| c.families() != families) {
            return Err(TwcmError::param("mixture components must share marginal families"));
        }
        let total: f64 = weights.iter().sum();
        let weights = if (total - 1.0).abs() <= 1e-12 {
            weights
        } else {
            weights.iter().map(|w| w / total).collect()
        };
        Ok(Self { weights, components })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[TwcmModel] {
        &self.components
    }

    pub fn families(&self) -> [Family; 3] {
        self.components[0].families()
    }

    /// `K (2 + Σ marginal params) + (K − 1)`.
    pub fn free_params(&self) -> usize {
        mixture_free_params(self.k(), self.families())
    }

    /// `ln π_c + ln f_c(obs)` per component, floored.
    fn component_terms(&self, obs: Observation) -> Result<Vec<f64>> {
        let floor = RESPONSIBILITY_FLOOR.ln();
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| Ok(w.ln() + c.log_density(obs)?.max(floor)))
            .collect()
    }

    pub fn log_density(&self, obs: Observation) -> Result<f64> {
        Ok(log_sum_exp(&self.component_terms(obs)?))
    }

    pub fn loglik(&self, data: &[Observation]) -> Result<f64> {
        if data.is_empty() {
            return Err(TwcmError::EmptyData);
        }
        let mut total = 0.0;
        for (row, &obs) in data.iter().enumerate() {
            total += self
                .log_density(obs)
                .map_err(|e| TwcmError::domain(format!("row {row}: {e}")))?;
        }
        Ok(total)
    }

    /// `n × K` posterior component probabilities; rows sum to one.
    pub fn responsibilities(&self, data: &[Observation]) -> Result<Vec<Vec<f64>>> {
        Ok(self.e_step(data)?.0)
    }

    fn e_step(&self, data: &[Observation]) -> Result<(Vec<Vec<f64>>, f64)> {
        let mut out = Vec::with_capacity(data.len());
        let mut loglik = 0.0;
        for (row, &obs) in data.iter().enumerate() {
            let terms = self
                .component_terms(obs)
                .map_err(|e| TwcmError::domain(format!("row {row}: {e}")))?;
            let lse = log_sum_exp(&terms);
            loglik += lse;
            out.push(terms.iter().map(|t| (t - lse).exp().max(RESPONSIBILITY_FLOOR)).collect());
        }
        Ok((out, loglik))
    }

    /// Index of the most probable component per row.
    pub fn assignments(&self, data: &[Observation]) -> Result<Vec<usize>> {
        Ok(self
            .responsibilities(data)?
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect())
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<(usize, Observation)>> {
        if n == 0 {
            return Err(TwcmError::param("sample size must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut x: f64 = rng.gen();
                let mut c = self.k() - 1;
                for (i, w) in self.weights.iter().enumerate() {
                    if x < *w {
                        c = i;
                        break;
                    }
                    x -= w;
                }
                Ok((c, self.components[c].draw(&mut rng)?))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn mixture_free_params(k: usize, families: [Family; 3]) -> usize {
    let per = 2 + families.iter().map(|f| f.param_count()).sum::<usize>();
    k * per + k.saturating_sub(1)
}

/// `{weights: [...], components: [model, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureJson {
    pub weights: Vec<f64>,
    pub components: Vec<ModelJson>,
}

impl From<MixtureModel> for MixtureJson {
    fn from(m: MixtureModel) -> Self {
        MixtureJson {
            weights: m.weights,
            components: m.components.into_iter().map(ModelJson::from).collect(),
        }
    }
}

impl TryFrom<MixtureJson> for MixtureModel {
    type Error = TwcmError;

    fn try_from(j: MixtureJson) -> Result<Self> {
        let components = j
            .components
            .into_iter()
            .map(TwcmModel::try_from)
            .collect::<Result<Vec<_>>>()?;
        MixtureModel::new(j.weights, components)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop when the relative log-likelihood change falls below this.
    pub tolerance: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iterations: 500,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmReport {
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the restart whose result was kept.
    pub restart: usize,
    pub trace: Vec<f64>,
    /// Final log-likelihood per restart (`None` where the restart failed).
    pub restart_logliks: Vec<Option<f64>>,
    /// Steps where the log-likelihood fell by more than 1e−8.
    pub decreases: usize,
    pub reinitializations: usize,
    /// Total responsibility per component.
    pub component_mass: Vec<f64>,
}

struct RunOutcome {
    model: MixtureModel,
    trace: Vec<f64>,
    converged: bool,
    reinitializations: usize,
    mass: Vec<f64>,
}

fn hard_assignment(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut row = vec![0.0; k];
            row[rng.gen_range(0..k)] = 1.0;
            row
        })
        .collect()
}

/// Hand component `c` a random contiguous block of rows.
fn reseed_component(resp: &mut [Vec<f64>], c: usize, rng: &mut ChaCha8Rng) {
    let n = resp.len();
    let k = resp[0].len();
    let len = n.div_ceil(k).max(1);
    let start = rng.gen_range(0..n);
    for m in (0..len).map(|i| (start + i) % n) {
        resp[m].iter_mut().for_each(|r| *r = 0.0);
        resp[m][c] = 1.0;
    }
}

fn em_run(
    data: &[Observation],
    k: usize,
    families: [Family; 3],
    config: &FitConfig,
    opts: &EmOptions,
    rng: &mut ChaCha8Rng,
) -> Result<RunOutcome> {
    let n = data.len();
    let mut resp = hard_assignment(n, k, rng);
    let mut collapses = vec![0usize; k];
    let mut reinitializations = 0;
    let mut previous: Option<MixtureModel> = None;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut mass = vec![0.0; k];

    for _ in 0..opts.max_iterations {
        // M-step
        for c in 0..k {
            mass[c] = resp.iter().map(|r| r[c]).sum();
            if mass[c] < 1e-3 * n as f64 {
                collapses[c] += 1;
                if collapses[c] > 1 {
                    return Err(TwcmError::ComponentCollapse { component: c });
                }
                reinitializations += 1;
                reseed_component(&mut resp, c, rng);
                for (cc, m) in mass.iter_mut().enumerate() {
                    *m = resp.iter().map(|r| r[cc]).sum();
                }
            }
        }
        let mut components = Vec::with_capacity(k);
        for c in 0..k {
            let w: Vec<f64> = resp.iter().map(|r| r[c]).collect();
            let warm = previous.as_ref().map(|p| *p.components[c].rho());
            let fit = fit_ifm_weighted(data, &w, families, config, warm.as_ref())?;
            components.push(fit.model);
        }
        let model = MixtureModel::new(mass.iter().map(|m| m / n as f64).collect(), components)?;

        // E-step
        let (r, ll) = model.e_step(data)?;
        resp = r;
        let done = trace
            .last()
            .is_some_and(|&prev| (ll - prev).abs() <= opts.tolerance * prev.abs());
        trace.push(ll);
        previous = Some(model);
        // with one component the responsibilities never change
        if done || k == 1 {
            converged = true;
            break;
        }
    }
    for (c, m) in mass.iter_mut().enumerate() {
        *m = resp.iter().map(|r| r[c]).sum();
    }
    Ok(RunOutcome {
        model: previous.expect("at least one EM iteration"),
        trace,
        converged,
        reinitializations,
        mass,
    })
}

/// EM with random hard-assignment starts; the restart with the largest final
/// log-likelihood wins.
pub fn em_fit(
    data: &[Observation],
    k: usize,
    families: [Family; 3],
    config: &FitConfig,
    opts: &EmOptions,
) -> Result<(MixtureModel, EmReport)> {
    config.validate()?;
    if k == 0 {
        return Err(TwcmError::param("K must be at least 1"));
    }
    if data.len() < 10 * k {
        return Err(TwcmError::param(format!(
            "EM needs at least 10·K = {} rows, got {}",
            10 * k,
            data.len()
        )));
    }
    if opts.restarts == 0 || opts.max_iterations == 0 || !(opts.tolerance > 0.0) {
        return Err(TwcmError::param("EM restarts, iterations and tolerance must be positive"));
    }
    let restarts = if k == 1 { 1 } else { opts.restarts };
    let mut best: Option<(usize, RunOutcome)> = None;
    let mut restart_logliks = Vec::with_capacity(restarts);
    let mut last_error = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(0x1000 + r as u64);
        match em_run(data, k, families, config, opts, &mut rng) {
            Ok(run) => {
                let ll = *run.trace.last().expect("nonempty trace");
                restart_logliks.push(Some(ll));
                if best.as_ref().map_or(true, |(_, b)| ll > *b.trace.last().unwrap()) {
                    best = Some((r, run));
                }
            }
            Err(e) => {
                restart_logliks.push(None);
                last_error = Some(e);
            }
        }
    }
    let Some((restart, run)) = best else {
        return Err(match last_error {
            Some(TwcmError::ComponentCollapse { component }) => TwcmError::ComponentCollapse { component },
            Some(e) => TwcmError::FitFailure {
                reason: format!("every EM restart failed; last error: {e}"),
                best: None,
            },
            None => unreachable!("at least one restart runs"),
        });
    };
    let decreases = run.trace.windows(2).filter(|w| w[1] < w[0] - 1e-8).count();
    let report = EmReport {
        loglik: *run.trace.last().unwrap(),
        iterations: run.trace.len(),
        converged: run.converged,
        restart,
        trace: run.trace,
        restart_logliks,
        decreases,
        reinitializations: run.reinitializations,
        component_mass: run.mass,
    };
    Ok((run.model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRow {
    pub k: usize,
    pub loglik: Option<f64>,
    pub p: usize,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best_k: usize,
    pub table: Vec<KRow>,
    pub model: MixtureModel,
    pub report: EmReport,
}

/// Fit each `K` in `ks` and keep the one with the smallest BIC.
pub fn select_k(
    data: &[Observation],
    ks: &[usize],
    families: [Family; 3],
    config: &FitConfig,
    opts: &EmOptions,
) -> Result<Selection> {
    if ks.is_empty() {
        return Err(TwcmError::param("empty K range"));
    }
    let mut table = Vec::with_capacity(ks.len());
    let mut best: Option<(f64, usize, MixtureModel, EmReport)> = None;
    for &k in ks {
        let p = mixture_free_params(k, families);
        match em_fit(data, k, families, config, opts) {
            Ok((model, report)) => {
                let (aic, bic) = information_criteria(report.loglik, p, data.len());
                table.push(KRow {
                    k,
                    loglik: Some(report.loglik),
                    p,
                    aic: Some(aic),
                    bic: Some(bic),
                    error: None,
                });
                if best.as_ref().map_or(true, |b| bic < b.0) {
                    best = Some((bic, k, model, report));
                }
            }
            Err(e) => table.push(KRow {
                k,
                loglik: None,
                p,
                aic: None,
                bic: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let (_, best_k, model, report) = best.ok_or_else(|| TwcmError::FitFailure {
        reason: "no K in the range could be fitted".into(),
        best: None,
    })?;
    Ok(Selection {
        best_k,
        table,
        model,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::RhoVector;
    use crate::fit::fit_ifm;
    use crate::marginals::Marginal;

    fn component(mu: f64) -> TwcmModel {
        TwcmModel::new(
            RhoVector::new(3.0, 3.0, 1.0 / 9.0).unwrap(),
            [
                Marginal::wrapped_cauchy(mu, 0.6).unwrap(),
                Marginal::wrapped_cauchy(mu + 1.0, 0.5).unwrap(),
                Marginal::wrapped_cauchy(2.0, 0.3).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn parameter_count() {
        let f = [Family::WrappedCauchy, Family::WrappedCauchy, Family::Weibull];
        assert_eq!(mixture_free_params(4, f), 35);
        assert_eq!(mixture_free_params(1, f), 8);
    }

    #[test]
    fn weights_validated_and_normalised() {
        assert!(MixtureModel::new(vec![0.5, 0.0], vec![component(0.0), component(1.0)]).is_err());
        let m = MixtureModel::new(vec![1.0, 3.0], vec![component(0.0), component(1.0)]).unwrap();
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn responsibilities_basic_cases() {
        let data = component(0.0).sample(20, 1).unwrap();
        let one = MixtureModel::new(vec![1.0], vec![component(0.0)]).unwrap();
        assert!(one.responsibilities(&data).unwrap().iter().all(|r| r == &vec![1.0]));
        let dup = MixtureModel::new(vec![0.5, 0.5], vec![component(0.0), component(0.0)]).unwrap();
        for r in dup.responsibilities(&data).unwrap() {
            assert!((r[0] - 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn responsibilities_match_density_ratios() {
        let m = MixtureModel::new(vec![0.3, 0.7], vec![component(0.0), component(1.5)]).unwrap();
        let data = m.sample(20, 2).unwrap().into_iter().map(|(_, x)| x).collect::<Vec<_>>();
        for (obs, r) in data.iter().zip(m.responsibilities(&data).unwrap()) {
            let a = 0.3 * m.components()[0].density(*obs).unwrap();
            let b = 0.7 * m.components()[1].density(*obs).unwrap();
            assert!((r[0] - a / (a + b)).abs() < 1e-12);
            assert!((r[0] + r[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn label_permutation_invariance() {
        let a = MixtureModel::new(vec![0.3, 0.7], vec![component(0.0), component(1.5)]).unwrap();
        let b = MixtureModel::new(vec![0.7, 0.3], vec![component(1.5), component(0.0)]).unwrap();
        let data = a.sample(50, 3).unwrap().into_iter().map(|(_, x)| x).collect::<Vec<_>>();
        assert!((a.loglik(&data).unwrap() - b.loglik(&data).unwrap()).abs() < 1e-9);
        for (ra, rb) in a.responsibilities(&data).unwrap().iter().zip(b.responsibilities(&data).unwrap()) {
            assert!((ra[0] - rb[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let m = MixtureModel::new(vec![0.4, 0.6], vec![component(0.0), component(2.5)]).unwrap();
        let g = 64;
        let h = crate::angle::TAU / g as f64;
        let mut total = 0.0;
        for i in 0..g {
            for j in 0..g {
                for k in 0..g {
                    total += m.log_density([i as f64 * h, j as f64 * h, k as f64 * h]).unwrap().exp();
                }
            }
        }
        assert!((total * h * h * h - 1.0).abs() < 1e-4, "{}", total * h * h * h);
    }

    #[test]
    fn single_component_em_is_ifm() {
        let data = component(0.0).sample(200, 4).unwrap();
        let fams = [Family::WrappedCauchy; 3];
        let cfg = FitConfig::with_seed(5);
        let (m, report) = em_fit(&data, 1, fams, &cfg, &EmOptions::default()).unwrap();
        let direct = fit_ifm(&data, fams, &cfg).unwrap();
        assert_eq!(m.components()[0], direct.model);
        assert!((report.loglik - direct.loglik).abs() < 1e-9 * direct.loglik.abs());
    }

    #[test]
    fn em_preconditions() {
        let data = component(0.0).sample(15, 4).unwrap();
        let fams = [Family::WrappedCauchy; 3];
        assert!(em_fit(&data, 2, fams, &FitConfig::default(), &EmOptions::default()).is_err());
        assert!(em_fit(&data, 0, fams, &FitConfig::default(), &EmOptions::default()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = MixtureModel::new(vec![0.3, 0.7], vec![component(0.0), component(1.5)]).unwrap();
        assert_eq!(MixtureModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}
