//! The full TWCM law: the copula composed with three marginals.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angle::TAU;
use crate::copula::{ConditionalWcSpec, RhoVector, Twcc};
use crate::error::{Result, TwcmError};
use crate::marginals::{Domain, Family, Marginal};

/// One trivariate observation; each entry is an angle or a positive real
/// according to the model's domain tags.
pub type Observation = [f64; 3];

fn check_coord(i: usize) -> Result<()> {
    if i > 2 {
        return Err(TwcmError::param(format!("coordinate index {i} out of range")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
#[derive(Serialize, Deserialize)]
#[serde(into = "ModelJson", try_from = "ModelJson")]
pub struct TwcmModel {
    copula: Twcc,
    marginals: [Marginal; 3],
}

impl TwcmModel {
    /// Build a model; `rho` is rescaled to its identifiable representative
    /// unless it already is one.
    pub fn new(rho: RhoVector, marginals: [Marginal; 3]) -> Result<Self> {
        let rho = if rho.is_identifiable() { rho } else { rho.normalized()? };
        Ok(Self {
            copula: Twcc::new(rho)?,
            marginals,
        })
    }

    /// Model with uniform marginals on all three coordinates.
    pub fn copula_only(rho: RhoVector) -> Result<Self> {
        Self::new(rho, [Marginal::uniform(); 3])
    }

    pub fn rho(&self) -> &RhoVector {
        self.copula.rho()
    }

    pub fn copula(&self) -> &Twcc {
        &self.copula
    }

    pub fn marginals(&self) -> &[Marginal; 3] {
        &self.marginals
    }

    pub fn families(&self) -> [Family; 3] {
        self.marginals.map(|m| m.family())
    }

    pub fn domains(&self) -> [Domain; 3] {
        self.marginals.map(|m| m.domain())
    }

    /// Free parameters: 2 for the copula plus the marginal parameters.
    pub fn free_params(&self) -> usize {
        2 + self.marginals.iter().map(Marginal::param_count).sum::<usize>()
    }

    /// `(2π F_1(θ_1), 2π F_2(θ_2), 2π F_3(θ_3))`.
    pub fn pseudo_observation(&self, obs: Observation) -> Result<[f64; 3]> {
        let mut u = [0.0; 3];
        for k in 0..3 {
            self.marginals[k].cdf(obs[k])?;
            u[k] = self.marginals[k].to_copula_scale(obs[k]);
        }
        Ok(u)
    }

    /// `ln f_k(θ_k) + ln 2π`, zero for a uniform marginal.
    fn marginal_term(&self, k: usize, x: f64) -> Result<f64> {
        Ok(self.marginals[k].ln_pdf(x)? + TAU.ln())
    }

    /// Log joint density at `obs`.
    pub fn log_density(&self, obs: Observation) -> Result<f64> {
        let u = self.pseudo_observation(obs)?;
        let mut out = self.copula.log_density(u);
        for k in 0..3 {
            out += self.marginal_term(k, obs[k])?;
        }
        Ok(out)
    }

    pub fn density(&self, obs: Observation) -> Result<f64> {
        self.log_density(obs).map(f64::exp)
    }

    /// Density of `(Θ_i, Θ_j)`.
    pub fn bivariate_marginal_density(&self, i: usize, j: usize, xi: f64, xj: f64) -> Result<f64> {
        let spec = self.copula.pairwise(i, j)?;
        let ui = TAU * self.marginals[i].cdf(xi)?;
        let uj = TAU * self.marginals[j].cdf(xj)?;
        Ok(TAU * TAU * spec.density(ui, uj) * self.marginals[i].pdf(xi)? * self.marginals[j].pdf(xj)?)
    }

    /// Density of the two coordinates other than `given`, at `obs`, given `Θ_given = obs[given]`.
    pub fn cond_density_2given1(&self, given: usize, obs: Observation) -> Result<f64> {
        check_coord(given)?;
        let u = self.pseudo_observation(obs)?;
        let mut out = TAU * TAU * self.copula.cond_2given1(u);
        for k in (0..3).filter(|&k| k != given) {
            out *= self.marginals[k].pdf(obs[k])?;
        }
        Ok(out)
    }

    /// Density of `Θ_i` at `xi` given `Θ_j = xj`.
    pub fn cond_density_1given1(&self, i: usize, j: usize, xi: f64, xj: f64) -> Result<f64> {
        let spec = self.copula.pairwise(i, j)?;
        let ui = TAU * self.marginals[i].cdf(xi)?;
        let uj = TAU * self.marginals[j].cdf(xj)?;
        Ok(TAU * spec.conditional(ui, uj) * self.marginals[i].pdf(xi)?)
    }

    /// Density of `Θ_i` at `obs[i]` given the other two entries of `obs`.
    pub fn cond_density_1given2(&self, i: usize, obs: Observation) -> Result<f64> {
        check_coord(i)?;
        let u = self.pseudo_observation(obs)?;
        let spec = ConditionalWcSpec::new(self.rho(), i, u)?;
        Ok(TAU * spec.density(u[i]) * self.marginals[i].pdf(obs[i])?)
    }

    /// Copula draw followed by `Θ_i = F_i⁻¹(U_i / 2π)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Observation> {
        let u = self.copula.draw(rng)?;
        let mut out = [0.0; 3];
        for k in 0..3 {
            let p = (u[k] / TAU).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
            out[k] = self.marginals[k].quantile(p)?;
        }
        Ok(out)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Observation>> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// `n` draws, deterministic given `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Observation>> {
        if n == 0 {
            return Err(TwcmError::param("sample size must be at least 1"));
        }
        self.sample_with(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Per-row log densities; domain errors name the offending row.
    pub fn log_densities(&self, data: &[Observation]) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(TwcmError::EmptyData);
        }
        let mut out = Vec::with_capacity(data.len());
        let mut bad = Vec::new();
        for (row, &obs) in data.iter().enumerate() {
            let v = self
                .log_density(obs)
                .map_err(|e| TwcmError::domain(format!("row {row}: {e}")))?;
            if !v.is_finite() {
                bad.push(row);
            }
            out.push(v);
        }
        if !bad.is_empty() {
            return Err(TwcmError::DegenerateRows { rows: bad });
        }
        Ok(out)
    }

    /// Sum of log densities over `data`; never returns `-∞`.
    pub fn loglik(&self, data: &[Observation]) -> Result<f64> {
        Ok(self.log_densities(data)?.iter().sum())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Log density of the TWCM with three wrapped Cauchy marginals via the
/// integral-free `g_i`/`h_ij` form. `wc[k] = (μ_k, ξ_k)`.
pub fn wc_closed_form_log_density(rho: &RhoVector, wc: [(f64, f64); 3], obs: Observation) -> Result<f64> {
    for (mu, xi) in wc {
        Marginal::wrapped_cauchy(mu, xi)?;
    }
    if obs.iter().any(|x| !x.is_finite()) {
        return Err(TwcmError::domain(format!("non-finite observation {obs:?}")));
    }
    let k = rho.constants()?;
    let g = |i: usize| {
        let (mu, xi) = wc[i];
        1.0 + xi * xi - 2.0 * xi * (obs[i] - mu).cos()
    };
    let bracket = k.c1 * g(0) * g(1) * g(2)
        + 2.0
            * (rho.rho12() * g(2) * wc_h(wc[0], wc[1], obs[0], obs[1])
                + rho.rho13() * g(1) * wc_h(wc[0], wc[2], obs[0], obs[2])
                + rho.rho23() * g(0) * wc_h(wc[1], wc[2], obs[1], obs[2]));
    let scale: f64 = wc.iter().map(|(_, xi)| 1.0 - xi * xi).product();
    Ok(k.c2.ln() + scale.ln() - bracket.ln())
}

/// The `h_ij` cross term of the wrapped Cauchy closed form.
pub fn wc_h(a: (f64, f64), b: (f64, f64), xa: f64, xb: f64) -> f64 {
    let (mu_i, xi_i) = a;
    let (mu_j, xi_j) = b;
    let (si, ci) = (xa - mu_i).sin_cos();
    let (sj, cj) = (xb - mu_j).sin_cos();
    (1.0 + xi_i * xi_i) * (1.0 + xi_j * xi_j) * ci * cj
        + (1.0 - xi_i * xi_i) * (1.0 - xi_j * xi_j) * si * sj
        - 2.0 * xi_j * (1.0 + xi_i * xi_i) * ci
        - 2.0 * xi_i * (1.0 + xi_j * xi_j) * cj
        + 4.0 * xi_i * xi_j
}

/// Kato–Pewsey bivariate wrapped Cauchy density with dependence `phi`
/// (any real with `|phi| ≠ 1`; folded internally) and marginals `(μ, ξ)`.
pub fn kato_pewsey_density(phi: f64, a: (f64, f64), b: (f64, f64), xa: f64, xb: f64) -> f64 {
    let r = crate::marginals::fold_parameter(phi);
    let (mu1, x1) = a;
    let (mu2, x2) = b;
    let (r2, a1, a2) = (r * r, x1 * x1, x2 * x2);
    let gamma = (1.0 - r2) * (1.0 - a1) * (1.0 - a2) / (TAU * TAU);
    let g0 = (1.0 + r2) * (1.0 + a1) * (1.0 + a2) - 8.0 * r * x1 * x2;
    let g1 = 2.0 * (1.0 + r2) * x1 * (1.0 + a2) - 4.0 * r * (1.0 + a1) * x2;
    let g2 = 2.0 * (1.0 + r2) * (1.0 + a1) * x2 - 4.0 * r * x1 * (1.0 + a2);
    let g3 = -4.0 * (1.0 + r2) * x1 * x2 + 2.0 * r * (1.0 + a1) * (1.0 + a2);
    let g4 = 2.0 * r * (1.0 - a1) * (1.0 - a2);
    let (s1, c1) = (xa - mu1).sin_cos();
    let (s2, c2) = (xb - mu2).sin_cos();
    gamma / (g0 - g1 * c1 - g2 * c2 - g3 * c1 * c2 - g4 * s1 * s2)
}

// --- JSON schema ---------------------------------------------------------------

/// `{family, params, origin, domain}` for one marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalJson {
    pub family: Family,
    pub params: BTreeMap<String, f64>,
    pub origin: Option<f64>,
    pub domain: Domain,
}

impl From<&Marginal> for MarginalJson {
    fn from(m: &Marginal) -> Self {
        MarginalJson {
            family: m.family(),
            params: m.params().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            origin: m.origin(),
            domain: m.domain(),
        }
    }
}

impl TryFrom<&MarginalJson> for Marginal {
    type Error = TwcmError;

    fn try_from(j: &MarginalJson) -> Result<Self> {
        let get = |name: &str| {
            j.params
                .get(name)
                .copied()
                .ok_or_else(|| TwcmError::param(format!("{} marginal is missing `{name}`", j.family)))
        };
        let m = match j.family {
            Family::Uniform => Marginal::uniform_with_origin(j.origin.unwrap_or(0.0))?,
            Family::WrappedCauchy => Marginal::wrapped_cauchy(get("mu")?, get("xi")?)?,
            Family::VonMises => Marginal::von_mises(get("mu")?, get("kappa")?)?,
            Family::Cardioid => Marginal::cardioid(get("mu")?, get("rho")?)?,
            Family::Weibull => Marginal::weibull(get("shape")?, get("scale")?)?,
        };
        let expected: Vec<&str> = m.params().iter().map(|(k, _)| *k).collect();
        if let Some(extra) = j.params.keys().find(|k| !expected.contains(&k.as_str())) {
            return Err(TwcmError::param(format!("unknown {} parameter `{extra}`", j.family)));
        }
        if j.domain != m.domain() {
            return Err(TwcmError::param(format!(
                "{} marginal declared with domain {}",
                j.family, j.domain
            )));
        }
        if let (Some(declared), Some(actual)) = (j.origin, m.origin()) {
            if (crate::angle::wrap(declared - actual)).min(TAU - crate::angle::wrap(declared - actual)) > 1e-12 {
                return Err(TwcmError::param(format!(
                    "{} origin must equal its location mu ({actual}), got {declared}",
                    j.family
                )));
            }
        }
        Ok(m)
    }
}

/// `{rho: [r12, r13, r23], marginals: [...; 3]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    pub rho: [f64; 3],
    pub marginals: Vec<MarginalJson>,
}

impl From<TwcmModel> for ModelJson {
    fn from(m: TwcmModel) -> Self {
        ModelJson {
            rho: m.rho().as_array(),
            marginals: m.marginals.iter().map(MarginalJson::from).collect(),
        }
    }
}

impl TryFrom<ModelJson> for TwcmModel {
    type Error = TwcmError;

    fn try_from(j: ModelJson) -> Result<Self> {
        if j.marginals.len() != 3 {
            return Err(TwcmError::param(format!(
                "a model needs exactly 3 marginals, got {}",
                j.marginals.len()
            )));
        }
        let m = [
            Marginal::try_from(&j.marginals[0])?,
            Marginal::try_from(&j.marginals[1])?,
            Marginal::try_from(&j.marginals[2])?,
        ];
        let rho = RhoVector::try_from(j.rho)?;
        TwcmModel::new(rho, m)
    }
}
