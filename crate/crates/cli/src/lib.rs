//! Command-line front end for the `riskbudget` solvers.
//!
//! `rbsolve` reads JSON problem files written in percent and runs one of
//! four subcommands: `solve`, `sweep`, `compare` and `bench`.

pub mod cli;
pub mod commands;
pub mod error;
pub mod problem;
pub mod report;

pub use cli::{run, Cli};
pub use error::{CliError, CliResult};
