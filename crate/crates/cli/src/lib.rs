//! Command-line front end for DIIV estimation, Monte Carlo runs and
//! analytic-share queries. Owns the CSV, config and report formats.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod report;

pub use commands::{estimate, shares, simulate, EstimateOptions, Outcome, SimulateOptions};
pub use error::{CliError, EXIT_ESTIMATION, EXIT_INPUT, EXIT_OK};
pub use report::Report;
