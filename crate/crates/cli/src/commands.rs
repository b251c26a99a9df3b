use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use twcm::angle::TAU;
use twcm::fit::{bootstrap_se, fit_ifm, information_criteria, FitConfig};
use twcm::mixture::{select_k, EmOptions, MixtureModel};
use twcm::model::Observation;
use twcm::timeseries::Ar2Params;
use twcm::{Domain, Family, Marginal, RhoVector, TwcmError, TwcmModel};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest, ColumnSpec, Dataset};
use crate::parse;

/// Writes to `--out` when given, else to the supplied stdout.
fn output<'a>(out: &Option<PathBuf>, stdout: &'a mut dyn Write) -> CliResult<Box<dyn Write + 'a>> {
    match out {
        Some(p) => {
            let f = fs::File::create(p).map_err(|e| CliError::io(p.display().to_string(), e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(stdout)),
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path.display().to_string(), e))
}

fn io_err(e: io::Error) -> CliError {
    CliError::io("<output>", e)
}

fn load_data(args: &DataArgs, domains: [Domain; 3], stderr: &mut dyn Write) -> CliResult<Dataset> {
    let spec = args.columns.as_deref().map(str::parse::<ColumnSpec>).transpose()?;
    if let Some(spec) = &spec {
        for (c, d) in spec.columns.iter().zip(domains) {
            if c.domain != d {
                return Err(CliError::input(format!(
                    "column `{}` is declared {} but the model expects {} data",
                    c.name, c.domain, d
                )));
            }
        }
    }
    let data = ingest(&args.data, spec.as_ref(), domains)?;
    for r in data.rejected.iter().take(10) {
        writeln!(stderr, "warning: rejected {r}").map_err(io_err)?;
    }
    if data.rejected.len() > 10 {
        writeln!(stderr, "warning: {} more rows rejected", data.rejected.len() - 10).map_err(io_err)?;
    }
    Ok(data)
}

fn family_domains(f: [Family; 3]) -> [Domain; 3] {
    f.map(Family::domain)
}

/// A model file: one TWCM or a mixture.
#[derive(Debug, Clone)]
pub enum ModelFile {
    Single(TwcmModel),
    Mixture(MixtureModel),
}

impl ModelFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("weights").is_some() {
            Ok(ModelFile::Mixture(serde_json::from_value(value)?))
        } else {
            Ok(ModelFile::Single(serde_json::from_value(value)?))
        }
    }

    fn domains(&self) -> [Domain; 3] {
        match self {
            ModelFile::Single(m) => m.domains(),
            ModelFile::Mixture(m) => m.components()[0].domains(),
        }
    }

    fn free_params(&self) -> usize {
        match self {
            ModelFile::Single(m) => m.free_params(),
            ModelFile::Mixture(m) => m.free_params(),
        }
    }

    fn loglik(&self, data: &[Observation]) -> CliResult<f64> {
        Ok(match self {
            ModelFile::Single(m) => m.loglik(data)?,
            ModelFile::Mixture(m) => m.loglik(data)?,
        })
    }
}

/// Shortest round-trip text, in exponent form outside `[1e−4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn write_rows(w: &mut dyn Write, header: &str, rows: &[Observation]) -> CliResult<()> {
    writeln!(w, "{header}").map_err(io_err)?;
    for r in rows {
        writeln!(w, "{},{},{}", num(r[0]), num(r[1]), num(r[2])).map_err(io_err)?;
    }
    Ok(())
}

pub fn protein_model() -> TwcmModel {
    TwcmModel::new(
        RhoVector::new(9.18, -1.17, -0.09).expect("valid"),
        [
            Marginal::von_mises(1.93, 27.6).expect("valid"),
            Marginal::von_mises(2.82, 17.3).expect("valid"),
            Marginal::von_mises(6.23, 84.4).expect("valid"),
        ],
    )
    .expect("valid")
}

pub fn buoy_mixture() -> MixtureModel {
    let component = |mu: f64, scale: f64| {
        TwcmModel::new(
            RhoVector::new(3.0, 3.0, 1.0 / 9.0).expect("valid"),
            [
                Marginal::wrapped_cauchy(mu, 0.7).expect("valid"),
                Marginal::wrapped_cauchy(mu + 0.5, 0.6).expect("valid"),
                Marginal::weibull(2.5, scale).expect("valid"),
            ],
        )
        .expect("valid")
    };
    MixtureModel::new(
        vec![0.3, 0.7],
        vec![component(1.0, 1.0), component(1.0 + std::f64::consts::FRAC_PI_2, 3.0)],
    )
    .expect("valid")
}

fn synth(a: &SynthArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let mut w = output(&a.out, stdout)?;
    let seed = a.seed.seed;
    writeln!(
        w,
        "# synthetic data: preset={} n={} seed={seed}",
        a.preset.to_possible_value().expect("named").get_name(),
        a.n
    )
    .map_err(io_err)?;
    match a.preset {
        Preset::Protein => write_rows(&mut *w, "phi,psi,omega", &protein_model().sample(a.n, seed)?)?,
        Preset::Copula => {
            let m = TwcmModel::copula_only(RhoVector::new(3.0, 3.0, 1.0 / 9.0)?)?;
            write_rows(&mut *w, "u1,u2,u3", &m.sample(a.n, seed)?)?
        }
        Preset::Buoy => {
            writeln!(w, "wind_dir,wave_dir,wave_height,component").map_err(io_err)?;
            for (c, r) in buoy_mixture().sample(a.n, seed)? {
                writeln!(w, "{},{},{},{c}", num(r[0]), num(r[1]), num(r[2])).map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

fn fit(a: &FitArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let families = parse::families(&a.marginals)?;
    let data = load_data(&a.data, family_domains(families), stderr)?;
    let config = FitConfig {
        max_iterations: a.max_iter,
        restarts: a.restarts,
        seed: a.seed.seed,
        ..FitConfig::default()
    };
    let result = fit_ifm(&data.rows, families, &config)?;
    for d in &result.diagnostics {
        writeln!(stderr, "note: {d}").map_err(io_err)?;
    }
    let mut w = output(&a.out, stdout)?;
    writeln!(w, "{}", result.to_json()?).map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn sample(a: &SampleArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let model = ModelFile::load(&a.model)?;
    let mut w = output(&a.out, stdout)?;
    match model {
        ModelFile::Single(m) => write_rows(&mut *w, "x1,x2,x3", &m.sample(a.n, a.seed.seed)?)?,
        ModelFile::Mixture(m) => {
            writeln!(w, "x1,x2,x3,component").map_err(io_err)?;
            for (c, r) in m.sample(a.n, a.seed.seed)? {
                writeln!(w, "{},{},{},{c}", num(r[0]), num(r[1]), num(r[2])).map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

enum Entry {
    Independence,
    File(String, ModelFile),
}

fn loglik(a: &LoglikArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let mut names: Vec<String> = a.model.iter().map(|p| p.display().to_string()).collect();
    if let Some(list) = &a.models {
        names.extend(list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()));
    }
    if names.is_empty() {
        return Err(CliError::input("give --model or --models"));
    }
    let entries = names
        .into_iter()
        .map(|n| {
            if n == "independence" {
                Ok(Entry::Independence)
            } else {
                ModelFile::load(Path::new(&n)).map(|m| Entry::File(n, m))
            }
        })
        .collect::<CliResult<Vec<_>>>()?;
    let domains = entries
        .iter()
        .find_map(|e| match e {
            Entry::File(_, m) => Some(m.domains()),
            Entry::Independence => None,
        })
        .unwrap_or([Domain::Circular; 3]);
    let data = load_data(&a.data, domains, stderr)?;
    let n = data.rows.len();
    writeln!(stdout, "model,loglik,aic,bic,p").map_err(io_err)?;
    for e in &entries {
        let (name, ll, p) = match e {
            Entry::Independence => {
                if domains.contains(&Domain::Linear) {
                    return Err(CliError::input("the independence baseline needs three circular columns"));
                }
                ("independence", -3.0 * n as f64 * TAU.ln(), 0)
            }
            Entry::File(name, m) => {
                if m.domains() != domains {
                    return Err(CliError::input(format!("{name}: domains differ from the other models")));
                }
                (name.as_str(), m.loglik(&data.rows)?, m.free_params())
            }
        };
        let (aic, bic) = information_criteria(ll, p, n);
        writeln!(stdout, "{name},{ll:.4},{aic:.4},{bic:.4},{p}").map_err(io_err)?;
    }
    writeln!(stdout, "# n = {n}").map_err(io_err)
}

fn mixture(a: &MixtureArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let families = parse::families(&a.marginals)?;
    let ks = parse::k_range(&a.k)?;
    let data = load_data(&a.data, family_domains(families), stderr)?;
    let config = FitConfig::with_seed(a.seed.seed);
    let opts = EmOptions {
        restarts: a.restarts,
        max_iterations: a.max_iter,
        ..EmOptions::default()
    };
    let sel = select_k(&data.rows, &ks, families, &config, &opts)?;
    writeln!(stdout, "k,loglik,p,aic,bic,status").map_err(io_err)?;
    for row in &sel.table {
        let f = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.4}"));
        let status = row.error.clone().unwrap_or_else(|| "ok".into()).replace(',', ";");
        writeln!(stdout, "{},{},{},{},{},{status}", row.k, f(row.loglik), row.p, f(row.aic), f(row.bic))
            .map_err(io_err)?;
    }
    writeln!(stdout, "# best K = {} (by BIC)", sel.best_k).map_err(io_err)?;
    if sel.report.decreases > 0 {
        writeln!(
            stderr,
            "note: log-likelihood decreased in {} EM step(s) of the kept run",
            sel.report.decreases
        )
        .map_err(io_err)?;
    }
    if let Some(p) = &a.model_out {
        write_file(p, &sel.model.to_json()?)?;
    }
    if let Some(p) = &a.assign_out {
        let mut text = String::from("component\n");
        for c in sel.model.assignments(&data.rows)? {
            text.push_str(&format!("{c}\n"));
        }
        write_file(p, &text)?;
    }
    Ok(())
}

fn bootstrap(a: &BootstrapArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let families = parse::families(&a.marginals)?;
    let data = load_data(&a.data, family_domains(families), stderr)?;
    let config = FitConfig {
        restarts: a.restarts,
        bootstrap_replicates: a.replicates,
        seed: a.seed.seed,
        ..FitConfig::default()
    };
    let r = bootstrap_se(&data.rows, families, &config)?;
    for warning in &r.warnings {
        writeln!(stderr, "warning: {warning}").map_err(io_err)?;
    }
    let mut w = output(&a.out, stdout)?;
    writeln!(w, "# replicates: {} requested, {} succeeded, {} failed", r.requested, r.succeeded, r.failed)
        .map_err(io_err)?;
    writeln!(w, "parameter,estimate,se").map_err(io_err)?;
    for p in &r.parameters {
        writeln!(w, "{},{},{}", p.name, num(p.estimate), num(p.se)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Cell midpoints along one axis: the circle, or `(0, q(1 − 1e−6)]` on a line.
fn axis(marginal: &Marginal, res: usize) -> CliResult<Vec<f64>> {
    let top = match marginal.domain() {
        Domain::Circular => TAU,
        Domain::Linear => marginal.quantile(1.0 - 1e-6)?,
    };
    let h = top / res as f64;
    Ok((0..res).map(|i| (i as f64 + 0.5) * h).collect())
}

fn grid(a: &GridArgs, stdout: &mut dyn Write) -> CliResult<()> {
    if a.res == 0 {
        return Err(CliError::input("--res must be positive"));
    }
    let model = ModelFile::load(&a.model)?;
    let (i, j) = parse::pair(&a.pair)?;
    let k = 3 - i - j;
    let given = a.given.as_deref().map(parse::given).transpose()?;
    if let Some((gk, _)) = given {
        if gk != k {
            return Err(CliError::input(format!("--given must name coordinate {}", k + 1)));
        }
    }
    let components: Vec<(f64, TwcmModel)> = match &model {
        ModelFile::Single(m) => vec![(1.0, m.clone())],
        ModelFile::Mixture(m) => m.weights().iter().copied().zip(m.components().iter().cloned()).collect(),
    };
    let first = &components[0].1;
    let xs = axis(&first.marginals()[i], a.res)?;
    let ys = axis(&first.marginals()[j], a.res)?;

    // conditioning weights π_c f_{c,k}(value) for a mixture
    let cond_weights: Option<Vec<f64>> = match given {
        Some((_, v)) => {
            let w = components
                .iter()
                .map(|(p, m)| Ok(p * m.marginals()[k].pdf(v)?))
                .collect::<Result<Vec<f64>, TwcmError>>()?;
            Some(w)
        }
        None => None,
    };

    let mut w = output(&a.out, stdout)?;
    writeln!(w, "x,y,density").map_err(io_err)?;
    for &x in &xs {
        for &y in &ys {
            let mut d = 0.0;
            match (&given, &cond_weights) {
                (Some((_, v)), Some(cw)) => {
                    let total: f64 = cw.iter().sum();
                    let mut obs = [0.0; 3];
                    obs[i] = x;
                    obs[j] = y;
                    obs[k] = *v;
                    for ((_, m), c) in components.iter().zip(cw) {
                        d += c / total * m.cond_density_2given1(k, obs)?;
                    }
                }
                _ => {
                    for (p, m) in &components {
                        d += p * m.bivariate_marginal_density(i, j, x, y)?;
                    }
                }
            }
            writeln!(w, "{},{},{}", num(x), num(y), num(d)).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

fn ar2(a: &Ar2Args, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let rho = parse::triple(&a.rho)?;
    let marginal = parse::marginal(&a.marginal)?;
    let params = Ar2Params::new(rho, marginal)?;
    if !params.is_stationary() {
        writeln!(
            stderr,
            "warning: rho_(t,t-1) != rho_(t-1,t-2); the chain is not stationary"
        )
        .map_err(io_err)?;
    }
    let chain = params.simulate(a.n, a.seed.seed)?;
    let mut w = output(&a.out, stdout)?;
    let desc: Vec<String> = marginal.params().iter().map(|(n, v)| format!("{n}={v}")).collect();
    writeln!(
        w,
        "# ar2 rho={},{},{} marginal={}({}) seed={}",
        rho[0],
        rho[1],
        rho[2],
        marginal.family(),
        desc.join(";"),
        a.seed.seed
    )
    .map_err(io_err)?;
    writeln!(w, "theta").map_err(io_err)?;
    for x in chain {
        writeln!(w, "{}", num(x)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Synth(a) => synth(a, stdout),
        Command::Fit(a) => fit(a, stdout, stderr),
        Command::Sample(a) => sample(a, stdout),
        Command::Loglik(a) => loglik(a, stdout, stderr),
        Command::Mixture(a) => mixture(a, stdout, stderr),
        Command::Bootstrap(a) => bootstrap(a, stdout, stderr),
        Command::Grid(a) => grid(a, stdout),
        Command::Ar2(a) => ar2(a, stdout, stderr),
    }
}
