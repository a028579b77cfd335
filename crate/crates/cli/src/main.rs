use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use diiv_cli::commands::{self, EstimateOptions, Outcome, SimulateOptions};
use diiv_core::twostage::SeKind;
use diiv_core::{DesignMode, Sign};

#[derive(Parser)]
#[command(
    name = "diiv",
    version,
    about = "Difference-in-instruments IV estimation and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate DIIV from a CSV table.
    Estimate {
        csv: PathBuf,
        /// Table layout; inferred from the header (z2 -> joint, h -> parallel) when omitted.
        #[arg(long)]
        design: Option<DesignMode>,
        /// Directive of instrument 1: +1 encourages, -1 discourages.
        #[arg(long, default_value = "+1", allow_hyphen_values = true)]
        s1: Sign,
        /// Directive of instrument 2.
        #[arg(long, default_value = "+1", allow_hyphen_values = true)]
        s2: Sign,
        /// Comma-separated covariate columns entering both stages.
        #[arg(long, value_delimiter = ',')]
        covariates: Vec<String>,
        #[arg(long, default_value = "robust")]
        se: SeKind,
        /// Exclude the interaction of the aligned instruments.
        #[arg(long)]
        drop_cross: bool,
        /// Also write the report to DIR/report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo study and write trials.csv, summary.txt and histogram.csv.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run trials on one thread. Output is identical either way.
        #[arg(long)]
        sequential: bool,
        /// Also write the simulated table of trial T as trial_T.csv.
        #[arg(long = "dump-trial", value_name = "T")]
        dump_trials: Vec<u64>,
    },
    /// Print analytic behavioral shares, lambda and the target effect.
    Shares {
        config: PathBuf,
        /// Also write the report to DIR/shares.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn finish(outcome: Outcome, out: Option<&PathBuf>, name: &str) -> ExitCode {
    print!("{}", outcome.report);
    if let Some(err) = outcome.report.get("error") {
        eprintln!("error: {err}");
    }
    let mut code = outcome.exit_code;
    if let Err(e) = commands::persist(&outcome.report, out, name) {
        eprintln!("error: {e}");
        code = code.max(e.exit_code());
    }
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Estimate {
            csv,
            design,
            s1,
            s2,
            covariates,
            se,
            drop_cross,
            out,
        } => {
            let opts = EstimateOptions {
                design,
                s1,
                s2,
                covariates,
                se,
                drop_cross,
            };
            finish(commands::estimate(&csv, &opts), out.as_ref(), "report.txt")
        }
        Command::Simulate {
            config,
            out,
            seed,
            sequential,
            dump_trials,
        } => {
            let opts = SimulateOptions {
                seed,
                sequential,
                dump_trials,
            };
            // The summary file is written by the command itself.
            finish(commands::simulate(&config, &out, &opts), None, "")
        }
        Command::Shares { config, out } => finish(commands::shares(&config), out.as_ref(), "shares.txt"),
    }
}
