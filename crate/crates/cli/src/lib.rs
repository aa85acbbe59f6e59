//! Command-line driver: every subcommand reads its inputs, calls the
//! library, writes artifacts next to `--out` and records them in
//! `manifest.tsv`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 I/O error.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

pub use error::CliError;
pub use output::MANIFEST;

#[derive(Parser, Debug)]
#[command(
    name = "spdekit",
    version,
    about = "Sparse SPDE random fields on triangulated domains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Mesh and Whittle–Matérn parameters shared by most subcommands.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Mesh file, or a generator: `builtin:unit-square:N`,
    /// `builtin:rectangle:X0:X1:Y0:Y1:NX:NY`, `builtin:interval:A:B:N`,
    /// `builtin:icosphere:R`.
    #[arg(long)]
    pub mesh: String,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, conflicts_with_all = ["range", "kappa_file"])]
    pub kappa: Option<f64>,
    /// Practical range `sqrt(8 nu) / kappa`, as an alternative to `--kappa`.
    #[arg(long, conflicts_with = "kappa_file")]
    pub range: Option<f64>,
    /// Per-vertex kappa as `vertex,value` CSV.
    #[arg(long)]
    pub kappa_file: Option<PathBuf>,
    /// Defaults to 1 unless `--sigma2` or `--tau-file` is given.
    #[arg(long, conflicts_with_all = ["sigma2", "tau_file"])]
    pub tau: Option<f64>,
    /// Marginal variance, as an alternative to `--tau` (stationary only).
    #[arg(long, conflicts_with = "tau_file")]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub tau_file: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Nig,
    Gal,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the precision matrix; writes it in Matrix Market format plus stats.txt.
    Assemble {
        #[command(flatten)]
        model: ModelArgs,
        /// Also write the FEM matrices C.mtx, C_lumped.mtx and G.mtx.
        #[arg(long)]
        fem: bool,
        #[arg(long, default_value = "Q.mtx")]
        out: PathBuf,
    },
    /// Draw prior samples at the vertices (integer or fractional alpha).
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        /// Rational approximation order for fractional alpha.
        #[arg(long, default_value_t = spdekit::fractional::DEFAULT_ORDER)]
        order: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        replicates: u64,
        #[arg(long, default_value = "samples.csv")]
        out: PathBuf,
    },
    /// Condition on observations and predict at points.
    Krige {
        #[command(flatten)]
        model: ModelArgs,
        /// CSV with columns x[,y[,z]],value[,noise_precision].
        #[arg(long)]
        obs: PathBuf,
        /// Noise precision for rows without a noise_precision column.
        #[arg(long, default_value_t = 1.0)]
        noise_precision: f64,
        /// Constant prior mean.
        #[arg(long, default_value_t = 0.0)]
        prior_mean: f64,
        /// Prediction points (x[,y[,z]]); without it the vertex posterior is written.
        #[arg(long)]
        predict: Option<PathBuf>,
        #[arg(long, default_value = "pred.csv")]
        out: PathBuf,
    },
    /// Estimate (kappa, tau, tau_e) by maximising the hyperparameter posterior.
    Fit {
        /// Initial kappa/tau come from the model flags.
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        obs: PathBuf,
        /// Initial observation noise standard-deviation inverse.
        #[arg(long, default_value_t = 1.0)]
        tau_e: f64,
        /// Gaussian prior sd on each log-parameter, centred at the initial value.
        #[arg(long)]
        prior_sd: Option<f64>,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value = "theta.txt")]
        out: PathBuf,
    },
    /// Separable space-time precision with AR(1) dynamics in time.
    Spacetime {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        time_steps: usize,
        /// AR(1) coefficient; alternatively `--h-t` and `--damping`.
        #[arg(long, conflicts_with_all = ["h_t", "damping"])]
        phi: Option<f64>,
        #[arg(long, requires = "damping")]
        h_t: Option<f64>,
        #[arg(long, requires = "h_t")]
        damping: Option<f64>,
        #[arg(long, default_value_t = spdekit::precision::DEFAULT_SPACETIME_CAP)]
        cap: usize,
        #[arg(long, default_value_t = 0)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "Q.mtx")]
        out: PathBuf,
    },
    /// Simulate log-Gaussian Cox process patterns.
    LgcpSim {
        #[arg(long)]
        mesh: String,
        /// Constant log-intensity.
        #[arg(long, conflicts_with = "eta_file")]
        eta: Option<f64>,
        /// Per-vertex log-intensity as `vertex,value` CSV.
        #[arg(long)]
        eta_file: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        replicates: u64,
        #[arg(long, default_value = "pattern.csv")]
        out: PathBuf,
    },
    /// Posterior mode of the log-intensity under a Whittle–Matérn prior.
    LgcpFit {
        #[command(flatten)]
        model: ModelArgs,
        /// Point pattern CSV with columns x[,y].
        #[arg(long)]
        pattern: PathBuf,
        /// Constant prior mean; defaults to log(M / |D|).
        #[arg(long)]
        prior_mean: Option<f64>,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        #[arg(long, default_value = "eta.csv")]
        out: PathBuf,
    },
    /// Rational approximation for fractional alpha; writes P.mtx, Qx.mtx and a header.
    Fractional {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = spdekit::fractional::DEFAULT_ORDER)]
        order: usize,
        #[arg(long, default_value_t = 0)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "rational.txt")]
        out: PathBuf,
    },
    /// Sample type-G (NIG or GAL driven) fields; alpha must be 2.
    TypegSample {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = Family::Nig)]
        family: Family,
        /// Mixing parameter: IG shape factor (nig) or Gamma rate (gal).
        #[arg(long, default_value_t = 1.0)]
        mixing: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        replicates: u64,
        #[arg(long, default_value = "samples.csv")]
        out: PathBuf,
    },
    /// Run acceptance checks and print a PASS/FAIL table.
    Validate {
        /// Suite name or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let argv = match config::expand(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("spdekit: {e}");
            return e.exit_code();
        }
    };
    let mut cmd = Cli::command().args_override_self(true);
    let names: Vec<String> = cmd
        .get_subcommands()
        .map(|s| s.get_name().to_string())
        .collect();
    for name in names {
        cmd = cmd.mut_subcommand(name, |s| s.args_override_self(true));
    }
    let cli = match cmd
        .try_get_matches_from(argv)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match commands::execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("spdekit: {e}");
            e.exit_code()
        }
    }
}
