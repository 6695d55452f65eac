//! Command-line harness: orthogonality sweeps on glued matrices, restarted
//! s-step GMRES solves, sketch embedding trials, cost tables and problem
//! generation. Every command writes CSV with a header line to `--out` or
//! stdout and a short summary to stderr.

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{parse_config, Settings};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical breakdown: {0}")]
    Breakdown(String),
    #[error(transparent)]
    Core(#[from] sstep_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for configuration and input errors, 3 for numerical breakdown.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Breakdown(_) => 3,
            CliError::Core(e) if e.is_breakdown() => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "sstep",
    version,
    about = "Block orthogonalization experiments for s-step GMRES"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Orthogonality error of a scheme on glued matrices.
    Orthtest(Options),
    /// Restarted s-step GMRES on a generated or MatrixMarket operator.
    Solve(Options),
    /// Empirical subspace-embedding distortion of sketches.
    Embedtest(Options),
    /// Closed-form costs of one restart cycle for every scheme.
    Costmodel(Options),
    /// Writes a test operator as a MatrixMarket file.
    Gen(Options),
}

/// Flags shared by all subcommands. Unset flags fall back to the config
/// file and then to per-command defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Problem dimension (rows).
    #[arg(long)]
    pub n: Option<usize>,
    /// Restart length, or number of columns for `orthtest` and `gen`.
    #[arg(long)]
    pub m: Option<usize>,
    /// Panel step size.
    #[arg(long)]
    pub s: Option<usize>,
    /// Big-panel size; also the sketched dimension for `embedtest`.
    #[arg(long)]
    pub shat: Option<usize>,
    /// bcgs2_cholqr2, bcgs2_randcholqr, twostage_pip, twostage_randbcgs or standard_cgs2;
    /// comma separated, or `all`, for `orthtest` and `solve`.
    #[arg(long)]
    pub scheme: Option<String>,
    /// gaussian, count, countgauss or identity; comma separated for `embedtest`.
    #[arg(long)]
    pub sketch: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Relative residual tolerance of `solve`.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output path; stdout when absent (required by `gen`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Panel condition numbers, comma separated.
    #[arg(long)]
    pub kappa: Option<String>,
    /// Global condition number of glued matrices.
    #[arg(long)]
    pub kappa_global: Option<f64>,
    /// Sketch size override.
    #[arg(long)]
    pub mhat: Option<usize>,
    /// MatrixMarket operator for `solve`.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// laplace2d, laplace3d or glued.
    #[arg(long)]
    pub problem: Option<String>,
    /// Grid points per dimension of the Laplace problems.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub max_restarts: Option<usize>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Orthtest(o) => commands::orthtest(&Settings::load(o)?),
        Command::Solve(o) => commands::solve(&Settings::load(o)?),
        Command::Embedtest(o) => commands::embedtest(&Settings::load(o)?),
        Command::Costmodel(o) => commands::costmodel(&Settings::load(o)?),
        Command::Gen(o) => commands::gen(&Settings::load(o)?),
    }
}
