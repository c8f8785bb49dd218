//! Command-line front end: data generation, training, sampling,
//! reconstruction, evaluation and run-directory audits.
//!
//! The argument types live here so that tests can drive the exact command
//! surface in-process through [`run`].

mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use commands::{audit, metrics_header, VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] vano_core::Error),
    #[error("audit failed: {}", .0.join("; "))]
    Audit(Vec<String>),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use vano_core::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Audit(_) => EXIT_FORMAT,
            CliError::Io { .. } => EXIT_USAGE,
            CliError::Core(e) => match e {
                E::Numerical(_) => EXIT_NUMERICAL,
                E::Format { .. } => EXIT_FORMAT,
                _ => EXIT_USAGE,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

const ENV_HELP: &str = "\
Environment:
  VANO_THREADS=<n>        cap the worker pool at n threads
  VANO_DETERMINISTIC=1    fixed reduction order (always the case; accepted for scripts)

Exit codes: 0 success, 2 usage error, 3 data-format error, 4 numerical failure.";

#[derive(Debug, Parser)]
#[command(name = "vano", version, about = "Variational autoencoding neural operators", after_help = ENV_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset file.
    #[command(subcommand)]
    GenData(GenData),
    /// Split a dataset into disjoint train and test files.
    Split(SplitArgs),
    /// Print a preset training configuration.
    PrintConfig {
        #[arg(value_enum)]
        preset: Preset,
    },
    /// Train a model and write a run directory.
    #[command(after_help = TRAIN_HELP)]
    Train(TrainArgs),
    /// Draw functions from the prior and decode them on a uniform grid.
    Sample(SampleArgs),
    /// Encode functions, decode the posterior mean and write input,
    /// reconstruction and absolute-error files.
    Reconstruct(ReconstructArgs),
    /// Compute a metric and append it to a metrics CSV.
    #[command(after_help = EVAL_HELP)]
    Eval(EvalArgs),
    /// Check that a run directory holds every expected artifact.
    Audit {
        run_dir: PathBuf,
    },
}

const TRAIN_HELP: &str = "\
Run directory contents:
  config.txt             exact configuration used (key = value)
  VERSION                version string of the binary
  train_log.csv          step,total,recon,kl,effective_lr,wall_ms (one row per step)
  checkpoint_<step>.ckpt periodic checkpoints
  final.ckpt             checkpoint after the last step
  last_good.ckpt         written instead of continuing when the loss turns non-finite";

const EVAL_HELP: &str = "\
Metrics CSV columns: metric,value,aux,dataset_a,dataset_b,seed
  hs        value = normalized Hilbert-Schmidt error, aux empty
  mmd       value = squared MMD, aux = kernel bandwidth
  gmmd      value = largest squared MMD over the bandwidth family, aux = maximizing bandwidth
  circular  two rows: circular_variance (aux = R1) and circular_skewness (empty when undefined)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Grf,
    Bumps,
}

#[derive(Debug, Subcommand)]
pub enum GenData {
    /// Gaussian random field on [0, 1] with Dirichlet boundary.
    Grf {
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        #[arg(long, default_value_t = 3.0)]
        tau: f64,
        #[arg(long, default_value_t = 2048)]
        n: usize,
        #[arg(long, default_value_t = 128)]
        m: usize,
        #[arg(long, default_value_t = 32)]
        n_eig: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; defaults to grf_seed<SEED>.fds.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Isotropic Gaussian bumps on the unit square.
    Bumps {
        #[arg(long, default_value_t = 2048)]
        n: usize,
        #[arg(long, default_value_t = 48)]
        side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the normalization of a 2D Gaussian density.
        #[arg(long)]
        standard_normalization: bool,
        /// Output file; defaults to bumps_seed<SEED>.fds.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub data: PathBuf,
    #[arg(long)]
    pub n_train: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Configuration file, or `grf` / `bumps` for a preset.
    pub config: String,
    pub data: PathBuf,
    pub out_dir: PathBuf,
    /// Override the iteration count.
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Override any configuration key, e.g. `--set beta=1e-5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Continue from a checkpoint of the same run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Suppress progress lines.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub count: usize,
    /// Points per axis.
    #[arg(long)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    /// Points per axis of the reconstruction; defaults to the data grid.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Writes <PREFIX>.input.fds, <PREFIX>.recon.fds and <PREFIX>.abs_error.fds.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Hs,
    Mmd,
    Gmmd,
    Circular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum QuadratureArg {
    Weighted,
    RawSum,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(value_enum)]
    pub metric: Metric,
    /// Dataset files (.fds) or, for `hs`, a linear-decoder checkpoint.
    pub inputs: Vec<PathBuf>,
    /// Analytic reference covariance for `hs`, e.g. `grf:alpha=2,tau=3,n_eig=32`.
    #[arg(long)]
    pub analytic: Option<String>,
    /// Grid points for `hs` when no dataset fixes the grid.
    #[arg(long, default_value_t = 128)]
    pub resolution: usize,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 20.0)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 64)]
    pub sigma_count: usize,
    #[arg(long, value_enum, default_value_t = QuadratureArg::Weighted)]
    pub quadrature: QuadratureArg,
    /// Random subset of at most this many samples per dataset.
    #[arg(long)]
    pub max_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "metrics.csv")]
    pub metrics: PathBuf,
}

/// Applies `VANO_THREADS` and validates `VANO_DETERMINISTIC`.
pub fn init_env() -> CliResult<()> {
    if let Ok(v) = std::env::var("VANO_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| CliError::Usage(format!("VANO_THREADS must be a positive integer, got {v:?}")))?;
        // A second initialization in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Ok(v) = std::env::var("VANO_DETERMINISTIC") {
        if !matches!(v.as_str(), "0" | "1") {
            return Err(CliError::Usage(format!("VANO_DETERMINISTIC must be 0 or 1, got {v:?}")));
        }
    }
    Ok(())
}

/// Executes one parsed command.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData(g) => commands::gen_data(g),
        Command::Split(a) => commands::split(a),
        Command::PrintConfig { preset } => {
            print!("{}", commands::preset_config(preset).to_text());
            Ok(())
        }
        Command::Train(a) => commands::train(a).map(|_| ()),
        Command::Sample(a) => commands::sample(a),
        Command::Reconstruct(a) => commands::reconstruct(a),
        Command::Eval(a) => commands::eval(a).map(|_| ()),
        Command::Audit { run_dir } => {
            audit(&run_dir)?;
            println!("{}: ok", run_dir.display());
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_args<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli)
}

pub use commands::{eval, train, EvalRow};
