mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use garch_tail::{DeltaMethod, ErrorClass};
use thiserror::Error;

use crate::output::Format;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] garch_tail::Error),
    #[error("{0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) => match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Numerical => 3,
                ErrorClass::NonConvergence => 4,
            },
            _ => 2,
        }
    }
}

/// Stationarity, tail index and extremal clustering of GARCH(p,q) models.
#[derive(Debug, Parser)]
#[command(name = "garch-tail", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Master seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; 0 uses all available.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Output directory. Without it the JSON result goes to stdout and no CSV is written.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model file (TOML).
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Path length used to seed the particle ensemble.
    #[arg(long, default_value_t = 11_000_000)]
    pub init_n: usize,
    /// Norm quantile above which states seed the ensemble.
    #[arg(long, default_value_t = 0.9999)]
    pub init_quantile: f64,
    /// Particles per iteration.
    #[arg(long = "particles", visible_alias = "J", default_value_t = 10_000)]
    pub j: usize,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    /// Scan range and step for the tail index, `lo:hi:step`.
    #[arg(long, default_value = "0.1:6:0.1", value_parser = parse_grid)]
    pub grid: (f64, f64, f64),
    #[arg(long, default_value_t = 0.005)]
    pub tol: f64,
    /// Iterations averaged per estimate while refining the root.
    #[arg(long, default_value_t = 100)]
    pub refine_average: usize,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    /// Number of tail chains.
    #[arg(long = "chains", visible_alias = "N", default_value_t = 100_000)]
    pub n: usize,
    /// Chain horizon.
    #[arg(long = "horizon", visible_alias = "T", default_value_t = 1000)]
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DeltaArg {
    Breiman,
    TailChain,
    Spectral,
}

impl From<DeltaArg> for DeltaMethod {
    fn from(d: DeltaArg) -> Self {
        match d {
            DeltaArg::Breiman => DeltaMethod::Breiman,
            DeltaArg::TailChain => DeltaMethod::TailChain,
            DeltaArg::Spectral => DeltaMethod::Spectral,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ConditionArg {
    X2,
    Sigma2,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a path of X² and σ².
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        burn: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Top Lyapunov exponent and the stationarity verdict.
    Stationarity {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 30_000)]
        t: usize,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
        /// Also run plain products to this length (0 skips them).
        #[arg(long, default_value_t = 0)]
        naive_t: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Tail index as the root of ρ_k = 1.
    Kappa {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        init: InitArgs,
        #[command(flatten)]
        kappa: KappaArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Converged particle approximation of the spectral measure.
    Spectral {
        #[command(flatten)]
        model: ModelArg,
        /// Tail index; estimated first when omitted.
        #[arg(long)]
        kappa: Option<f64>,
        #[command(flatten)]
        init: InitArgs,
        #[command(flatten)]
        kappa_search: KappaArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Forward tail chains.
    Tailchain {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        kappa: Option<f64>,
        #[command(flatten)]
        init: InitArgs,
        #[command(flatten)]
        kappa_search: KappaArgs,
        #[command(flatten)]
        chains: ChainArgs,
        #[arg(long, value_enum, default_value_t = ConditionArg::X2)]
        condition: ConditionArg,
        /// Chains written out in full.
        #[arg(long, default_value_t = 0)]
        keep: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Extremogram, cluster sizes, extremal indices and tail skewness.
    Clusters {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        kappa: Option<f64>,
        #[command(flatten)]
        init: InitArgs,
        #[command(flatten)]
        kappa_search: KappaArgs,
        #[command(flatten)]
        chains: ChainArgs,
        #[arg(long, default_value_t = 25)]
        taumax: usize,
        #[arg(long, default_value_t = 200)]
        imax: usize,
        #[arg(long, value_enum, default_value_t = DeltaArg::Breiman)]
        delta: DeltaArg,
        #[command(flatten)]
        common: Common,
    },
    /// Estimates from one long simulated path.
    Validate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        burn: usize,
        /// Run lengths for the runs estimator.
        #[arg(long, value_delimiter = ',', default_values_t = [100, 1000])]
        m: Vec<usize>,
        /// Threshold quantiles of X².
        #[arg(long, value_delimiter = ',', default_values_t = [0.99, 0.999, 0.9999])]
        quantiles: Vec<f64>,
        #[arg(long, default_value_t = 25)]
        taumax: usize,
        /// Threshold quantile for the tail-ratio data.
        #[arg(long, default_value_t = 0.999)]
        qq_quantile: f64,
        #[arg(long, default_value_t = 100.0)]
        qq_rmax: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Full summary row: stationarity, tail index, clusters.
    Report {
        #[command(flatten)]
        model: ModelArg,
        /// Product length for the Lyapunov exponent.
        #[arg(long = "t", default_value_t = 30_000)]
        lyap_t: usize,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
        #[command(flatten)]
        init: InitArgs,
        #[command(flatten)]
        kappa: KappaArgs,
        #[command(flatten)]
        chains: ChainArgs,
        #[arg(long, default_value_t = 25)]
        taumax: usize,
        #[arg(long, value_enum, default_value_t = DeltaArg::Breiman)]
        delta: DeltaArg,
        #[command(flatten)]
        common: Common,
    },
    /// θ of the upper tail over a GARCH(2,2) grid in (α₁, β₁).
    Contour {
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3])]
        alpha1: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.4, 0.5, 0.6])]
        beta1: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        alpha2: f64,
        #[arg(long, default_value_t = 0.05)]
        beta2: f64,
        /// Innovation family: gaussian, scaled_t or skew_t.
        #[arg(long, default_value = "gaussian")]
        innovation: String,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long, default_value_t = 2_000_000)]
        init_n: usize,
        #[arg(long, default_value_t = 0.999)]
        init_quantile: f64,
        #[arg(long = "particles", visible_alias = "J", default_value_t = 5_000)]
        j: usize,
        #[arg(long = "chains", visible_alias = "N", default_value_t = 20_000)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_grid(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, c] = parts.as_slice() else {
        return Err(format!("expected lo:hi:step, got {s:?}"));
    };
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    let (lo, hi, step) = (p(a)?, p(b)?, p(c)?);
    if !(lo > 0.0 && hi > lo && step > 0.0) {
        return Err(format!("need 0 < lo < hi and step > 0, got {s:?}"));
    }
    Ok((lo, hi, step))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
