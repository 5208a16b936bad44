use clap::{Args, Parser, Subcommand, ValueEnum};
use riskbudget::Algorithm;

use crate::commands::{bench, compare, solve, sweep};
use crate::error::{CliError, CliResult};
use crate::problem::{Overrides, StartKeyword};

#[derive(Debug, Parser)]
#[command(name = "rbsolve", version, about = "Risk budgeting portfolios under weight constraints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem file and print the volatility breakdown.
    Solve(SolveArgs),
    /// Solve along a grid of one parameter and print delimited data.
    Sweep(SweepArgs),
    /// Solve alternative constraint encodings and rank them by Lagrangian value.
    Compare(CompareArgs),
    /// Time the solvers on synthetic universes.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StartArg {
    Rp,
    Ew,
    Cw,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverFlags {
    /// ccd, admm-newton, admm-ccd, admm-qp or auto.
    #[arg(long, value_parser = parse_algorithm)]
    pub algo: Option<Algorithm>,
    /// Tolerance on |sum x - 1| of the outer loop.
    #[arg(long)]
    pub lambda_tol: Option<f64>,
    /// Initial ADMM penalty.
    #[arg(long)]
    pub phi: Option<f64>,
    /// Keep the ADMM penalty fixed.
    #[arg(long)]
    pub no_adaptive: bool,
    /// Starting portfolio: naive risk parity, equal weights or benchmark weights.
    #[arg(long, value_enum)]
    pub start: Option<StartArg>,
}

impl SolverFlags {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            algorithm: self.algo,
            lambda_tol: self.lambda_tol,
            phi: self.phi,
            no_adaptive: self.no_adaptive,
            start: self.start.map(|s| match s {
                StartArg::Rp => StartKeyword::Rp,
                StartArg::Ew => StartKeyword::Ew,
                StartArg::Cw => StartKeyword::Cw,
            }),
        }
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: riskbudget::Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Problem file, or `-` for standard input.
    pub problem: String,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Print the result document as JSON.
    #[arg(long, conflicts_with = "table")]
    pub json: bool,
    /// Print the breakdown table (the default).
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    pub problem: String,
    /// `lower-bound:<asset>` or `turnover`; the asset is a name or a 1-based position.
    #[arg(long)]
    pub param: String,
    /// Grid values in percent, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "range", required_unless_present = "range")]
    pub values: Vec<f64>,
    /// Evenly spaced grid `start:stop:count` in percent, both ends included.
    #[arg(long)]
    pub range: Option<String>,
    /// Also solve the least-squares formulation at every grid point.
    #[arg(long)]
    pub with_ls: bool,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: SweepFormat,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    pub problem: String,
    /// JSON array of encodings `{label, group?, constraints}` replacing those in the problem file.
    #[arg(long)]
    pub encodings: Option<String>,
    /// Add the least-squares solution over the problem's constraints.
    #[arg(long)]
    pub with_ls: bool,
    /// Add the naive two-step portfolio pinning the assets that break their bounds.
    #[arg(long)]
    pub with_naive: bool,
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "20,100")]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_algorithm, default_value = "ccd,admm-newton,admm-ccd,admm-qp")]
    pub algorithms: Vec<Algorithm>,
    /// 1: fixed phi and plain bisection, 2: fixed phi and warm-started bisection, 3: adaptive phi and warm-started bisection.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub tiers: Vec<u8>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

/// Runs a parsed command line and returns what should be printed.
pub fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Solve(args) => solve::run(args),
        Command::Sweep(args) => sweep::run(args),
        Command::Compare(args) => compare::run(args),
        Command::Bench(args) => {
            let config = bench::BenchConfig::from_args(args)?;
            let rows = bench::run_bench(&config)?;
            if args.json {
                Ok(serde_json::to_string_pretty(&rows)? + "\n")
            } else {
                Ok(bench::table(&rows))
            }
        }
    }
}

pub(crate) fn invalid(message: impl Into<String>) -> CliError {
    CliError::input(message)
}
