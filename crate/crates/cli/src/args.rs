use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ordrobust::sim::ErrorDist;
use ordrobust::{LinkFamily, LossKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "ordrobust", version, about = "Robust Bayesian ordinal regression")]
pub struct Cli {
    /// Directory receiving every output file and the manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Worker threads for sampling; 0 uses every core. ORDROBUST_WORKERS wins.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", content = "args", rename_all = "kebab-case")]
pub enum Command {
    /// Sample a posterior and write its summary.
    Fit(FitArgs),
    /// Generalized residuals at the posterior mean, with empirical bands.
    Residuals(ResidualArgs),
    /// Replicated contaminated-data study: log-MSE and coverage tables.
    Simulate(SimulateArgs),
    /// Per-unit robustness index or a contamination sweep.
    Robustness(RobustnessArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Residuals(_) => "residuals",
            Command::Simulate(_) => "simulate",
            Command::Robustness(_) => "robustness",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON preprocessing spec naming the response and covariate actions.
    #[arg(long)]
    pub preprocess: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SamplerArgs {
    #[arg(long, default_value = "probit")]
    pub link: LinkFamily,
    /// Posterior draws B.
    #[arg(long, default_value_t = 500)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Prior standard deviation of every unconstrained coordinate.
    #[arg(long, default_value_t = 10.0)]
    pub prior_sd: f64,
    /// Multiplier w on the loss term.
    #[arg(long, default_value_t = 1.0)]
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long, default_value = "loglik")]
    pub loss: LossKind,
    /// α for dp, γ for gamma-syn and gamma-gen.
    #[arg(long)]
    pub tuning: Option<f64>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Central credible level of the reported intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Also write every draw to draws.csv.
    #[arg(long)]
    pub emit_draws: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ResidualArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// summary.csv of an earlier fit; its means replace an inline fit.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct LossListArgs {
    #[arg(long, value_delimiter = ',', default_value = "loglik,dp,gamma-syn,gamma-gen")]
    pub losses: Vec<LossKind>,
    /// Tuning values applied to every robust loss.
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5")]
    pub tunings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Error distribution; fits use the matching link.
    #[arg(long, default_value = "normal")]
    pub error: ErrorDist,
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.15,0.2")]
    pub rho: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[command(flatten)]
    pub losses: LossListArgs,
    #[arg(long, default_value_t = 500)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10.0)]
    pub prior_sd: f64,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobustnessMode {
    Index,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RobustnessArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long, value_enum)]
    pub mode: RobustnessMode,
    #[command(flatten)]
    pub losses: LossListArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Sweep magnitudes; the first must be 0.
    #[arg(long, value_delimiter = ',', default_value = "0,5,10,20,50")]
    pub omegas: Vec<f64>,
    /// Contaminated unit, 1-based row of the data file.
    #[arg(long)]
    pub unit: Option<usize>,
    /// Contaminated covariate, by design-column name or 1-based position.
    #[arg(long)]
    pub covariate: Option<String>,
    /// +1 pushes the unit above its category band, -1 below.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub direction: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}
