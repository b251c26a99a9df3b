use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "twcm", version, about = "Trivariate wrapped Cauchy copula models for toroidal and cylindrical data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from a built-in parameter set
    Synth(SynthArgs),
    /// Fit a model by inference functions for margins
    Fit(FitArgs),
    /// Draw from a model (or mixture) file
    Sample(SampleArgs),
    /// Log-likelihood, AIC and BIC of one or more models on a dataset
    Loglik(LoglikArgs),
    /// Fit mixtures over a range of K and select by BIC
    Mixture(MixtureArgs),
    /// Bootstrap standard errors of the IFM estimates
    Bootstrap(BootstrapArgs),
    /// Density grid of a bivariate marginal or conditional
    Grid(GridArgs),
    /// Simulate the circular AR(2) process
    Ar2(Ar2Args),
}

#[derive(Debug, Clone, Args)]
pub struct SeedArg {
    #[arg(long, env = "TWCM_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with a header row
    #[arg(long)]
    pub data: PathBuf,
    /// `name:domain[:unit]` ×3; defaults to the first three columns in radians
    #[arg(long)]
    pub columns: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Three von Mises dihedral angles with the published protein fit
    Protein,
    /// Two-component mixture of wind direction, wave direction and wave height
    Buoy,
    /// Copula only, rho = (3, 3, 1/9)
    Copula,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Three families, e.g. `von_mises,von_mises,von_mises`
    #[arg(long)]
    pub marginals: String,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LoglikArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated model files; `independence` is the uniform independence baseline
    #[arg(long)]
    pub models: Option<String>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct MixtureArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub marginals: String,
    /// `2..5` or `1,2,3`
    #[arg(long, default_value = "2..5")]
    pub k: String,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Where to write the best mixture JSON
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// Where to write per-row component assignments
    #[arg(long)]
    pub assign_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub marginals: String,
    /// Number of bootstrap replicates
    #[arg(long = "B", short = 'B', default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// 1-based coordinate pair, e.g. `1,2`
    #[arg(long)]
    pub pair: String,
    /// Condition on the third coordinate, e.g. `3=6.2`
    #[arg(long)]
    pub given: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub res: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Ar2Args {
    /// `rho_{t,t-1},rho_{t,t-2},rho_{t-1,t-2}`
    #[arg(long, allow_hyphen_values = true)]
    pub rho: String,
    /// e.g. `wrapped_cauchy:1,0.5` or `von_mises:mu=0,kappa=2`
    #[arg(long)]
    pub marginal: String,
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
