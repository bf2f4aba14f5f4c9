use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const DEFAULT_QUAD_ORDER: usize = 64;
pub const DEFAULT_REPS: usize = 100;

#[derive(Debug, Clone, Parser, Serialize)]
#[command(
    name = "ldproj",
    version,
    about = "Tail probabilities of random projections of l_p spheres"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    pub format: Format,

    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for replications (defaults to all cores).
    #[arg(long, env = "LDPROJ_THREADS", global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Sld,
    Is,
    Mc,
    Oracle,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Rate function, dual point and curvature constants.
    Rate(ProblemArgs),
    /// Sharp large deviation estimate for seeded directions.
    Sld(SldArgs),
    /// Importance-sampling estimate.
    Is(SampleArgs),
    /// Naive Monte Carlo estimate.
    Mc(SampleArgs),
    /// Quadrature value of the tail for n = 2.
    Oracle(OracleArgs),
    /// Side-by-side estimates with relative distance and the LDP value.
    Compare(CompareArgs),
    /// Limiting covariance of the direction fluctuations.
    CltCov(ProblemArgs),
    /// Simulated fluctuation terms against their Gaussian limit.
    CltSim(CltSimArgs),
    /// Baseline curve and per-direction SLD scatter.
    Figure2(Figure2Args),
    /// Compare the diagonal and axis directions.
    Extremize(NArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProblemArgs {
    #[arg(long)]
    pub p: f64,

    /// Thresholds, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub a: Vec<f64>,

    #[arg(long, default_value_t = DEFAULT_QUAD_ORDER)]
    pub quad_order: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    /// Dimensions, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SldArgs {
    #[command(flatten)]
    pub dims: NArgs,

    #[arg(long, default_value_t = 1)]
    pub theta_seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    pub dims: NArgs,

    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: usize,

    /// Seed for the sampling noise.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Seed for the direction θ.
    #[arg(long, default_value_t = 1)]
    pub theta_seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    #[arg(long, default_value_t = 1)]
    pub theta_seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub sample: SampleArgs,

    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Estimator::Sld, Estimator::Is])]
    pub estimators: Vec<Estimator>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CltSimArgs {
    #[command(flatten)]
    pub dims: NArgs,

    /// Draws of the finite-n terms.
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: usize,

    /// Draws from the limit law (defaults to 10 × reps).
    #[arg(long)]
    pub limit_draws: Option<usize>,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Figure2Args {
    #[command(flatten)]
    pub dims: NArgs,

    /// First direction seed; scatter column k uses theta_seed + k.
    #[arg(long, default_value_t = 1)]
    pub theta_seed: u64,

    /// Number of scatter directions per n.
    #[arg(long, default_value_t = 10)]
    pub directions: usize,
}

impl Command {
    pub fn problem(&self) -> &ProblemArgs {
        match self {
            Command::Rate(p) | Command::CltCov(p) => p,
            Command::Sld(s) => &s.dims.problem,
            Command::Is(s) | Command::Mc(s) => &s.dims.problem,
            Command::Oracle(o) => &o.problem,
            Command::Compare(c) => &c.sample.dims.problem,
            Command::CltSim(c) => &c.dims.problem,
            Command::Figure2(f) => &f.dims.problem,
            Command::Extremize(e) => &e.problem,
        }
    }
}
