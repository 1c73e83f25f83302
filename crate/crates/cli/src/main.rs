//! `fact`: fast closed testing from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;
mod input;

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fact", version, about = "Fast closed testing with monotone symmetric local tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reject hypotheses at a family-wise error rate.
    Test(InputArgs),
    /// Adjusted p-values for every hypothesis.
    Adjust(InputArgs),
    /// Compare FACT with brute-force closed testing (at most 20 hypotheses).
    Verify(InputArgs),
    /// Monte-Carlo FWER and power under a normal-means model.
    Simulate(SimulateArgs),
    /// Pre-build a critical-value table in the cache directory.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Method choice and the knobs shared by every subcommand.
#[derive(Debug, Args)]
pub struct MethodArgs {
    /// Family-wise error rate.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// bonferroni|holm, simes|hommel, fisher, stouffer, wilkinson, tpm, hc,
    /// simes-hc, gst, hhh, sum-p. `simulate` accepts a comma-separated list.
    #[arg(long, default_value = "simes")]
    pub method: String,
    /// Sparsity guess for simes-hc; over-estimating is the robust choice.
    /// `simulate` accepts a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub sparsity: Vec<usize>,
    /// Truncation point for tpm (default: alpha).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Fraction of order statistics entering higher criticism.
    #[arg(long)]
    pub alpha0: Option<f64>,
    /// Wilkinson threshold (default: alpha).
    #[arg(long)]
    pub d: Option<f64>,
    /// Master seed for calibration and simulation.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Monte-Carlo samples per subset size for calibrated tests.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Where calibrated tables are stored and looked up.
    #[arg(long, default_value = ".fact-cache")]
    pub cache_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write output here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV of p-values (`p` or `id,p` per row, optional header); `-` is stdin.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of hypotheses.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Number of false nulls (signals in the first coordinates).
    #[arg(long, default_value_t = 0)]
    pub s_true: usize,
    /// Signal strength M.
    #[arg(long, default_value_t = 0.0)]
    pub signal: f64,
    /// iid, spiked or ar1.
    #[arg(long, default_value = "iid")]
    pub cov: String,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[command(flatten)]
    pub method: MethodArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Largest subset size to calibrate.
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub method: MethodArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("{}", CliError::usage(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Test(a) => commands::test(&a),
        Command::Adjust(a) => commands::adjust(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Calibrate(a) => commands::calibrate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
