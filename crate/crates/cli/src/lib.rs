//! Argument parsing and dispatch for the `binreg` binary.
//!
//! Every subcommand computes its results in memory, then writes them together
//! with a `<subcommand>.manifest.json` into the output directory (`--out`,
//! else `$BINREG_OUT_DIR`, else `./binreg-out`). Exit status is 0 on
//! success, 2 when the enumeration budget would be exceeded and 1 for any
//! other error, including usage errors.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod output;

pub use output::RunManifest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] binreg::Error),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_budget() => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "binreg", version, about = "Exact k-sparse binary regression: solves, theory curves and experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Model parameters; unset values fall back to the config file, then to
/// p=60, k=4, n=15, sigma2=1, seed=0.
#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    /// Number of columns
    #[arg(long)]
    pub p: Option<usize>,
    /// Support size
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of samples
    #[arg(long)]
    pub n: Option<usize>,
    /// Noise variance
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Master seed; determines all randomness of the run
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Worker threads (0 = all cores)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Maximum number of supports an exhaustive search may evaluate [default: 1e9]
    #[arg(long)]
    pub budget: Option<u64>,
    /// Output directory [default: $BINREG_OUT_DIR or ./binreg-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// TOML or JSON experiment config; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Objective norm: l2 (scaled) or linf
    #[arg(long)]
    pub norm: Option<binreg::NormMode>,
    /// Radius constant D0 [default: 3]
    #[arg(long)]
    pub d0: Option<f64>,
    /// Trials per grid point [default: 100]
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated sample sizes for the sweep [default: 8,15,30]
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    /// Monte Carlo draws for moment and chi-square checks [default: 1e6]
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an instance and write instance.bin plus its JSON sidecar
    Gen {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Draw Y independently of X
        #[arg(long)]
        pure_noise: bool,
    },
    /// Thresholds, regime, Gamma curve and overlap window; n defaults to ceil(n*)
    Theory {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Grid points of the Gamma curve
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long, default_value_t = 3.0)]
        d0: f64,
    },
    /// Exact solve of an instance file (or a freshly generated one)
    Solve {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Instance file written by `gen`
        #[arg(long)]
        input: Option<PathBuf>,
        /// Restrict to supports sharing exactly k - ell planted columns
        #[arg(long)]
        ell: Option<usize>,
        /// Enable the triangle-inequality branch bound
        #[arg(long)]
        prune: bool,
        #[arg(long, default_value = "l2")]
        norm: binreg::NormMode,
        /// Generate a pure-noise instance when no --input is given
        #[arg(long)]
        pure_noise: bool,
    },
    /// Per-overlap minima and sub-level counts; writes profile.csv
    Profile {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Sub-level radius [default: D0 max(Gamma(0), Gamma(1))]
        #[arg(long)]
        r: Option<f64>,
        #[arg(long, default_value_t = 3.0)]
        d0: f64,
        #[arg(long, default_value = "l2")]
        norm: binreg::NormMode,
    },
    /// Conditional moments of the solution count given Y
    Moments {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Instance file whose response is used as Y
        #[arg(long)]
        input: Option<PathBuf>,
        /// Comma-separated Y values (n is their count)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y: Option<Vec<f64>>,
        /// Interval half-width t
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// Grids of p, q and the ratio bound; writes kernels.csv
    Kernels {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0])]
        t: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0])]
        y: Vec<f64>,
        /// [default: 0, 0.05, ..., 0.95]
        #[arg(long, value_delimiter = ',')]
        rho: Option<Vec<f64>>,
    },
    /// All-or-nothing sweep over the n grid
    Sweep(ExperimentArgs),
    /// Per-overlap lower bound and sandwich checks at one n
    Gammaval(ExperimentArgs),
    /// Overlap-gap structure report
    Ogp(ExperimentArgs),
    /// Moment, kernel, chi-square, pure-noise and trend checks
    Momval(ExperimentArgs),
}

/// Parses `args` (including the program name), runs, and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if informational { 0 } else { 1 };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
