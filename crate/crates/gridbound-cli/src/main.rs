//! `gridbound`: abstracts a continuous-state walker model into finite
//! interval MDPs over uniform grids, solves guaranteed lower/upper bounds
//! on expected cost to goal, and validates strategies against them.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 model or input
//! consistency error, 3 solver non-convergence, 4 I/O error.

// `!(x > 0.0)` guards are deliberate: they reject NaN along with
// out-of-range values, which `x <= 0.0` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod errors;
mod experiment;
mod outputs;

use clap::Parser;
use config::RunConfig;
use errors::{CliError, Result};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "gridbound",
    version,
    about = "Guaranteed expected-cost bounds for continuous-state walker models \
             via grid-induced interval MDPs"
)]
struct Cli {
    /// Run-configuration TOML file (built-in defaults when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config file and GRIDBOUND_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Never affects results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Subcommand)]
enum Command {
    /// Build the induced interval MDP at each configured cell width.
    Induce(commands::InduceArgs),
    /// Solve robust value iteration; write values, strategy, adversary, report.
    Vi(commands::ViArgs),
    /// Export a solved strategy in the re-importable box format.
    Strategy(commands::StrategyArgs),
    /// Write a 1-D section of the bound surfaces at a fixed coordinate.
    Section(commands::SectionArgs),
    /// Verify that refining the grid only tightens the solved bounds.
    RefineCheck(commands::RefineCheckArgs),
    /// Simulate the upper-bound strategy and score it against the bounds.
    Mc(commands::McArgs),
    /// Compare an external strategy and its claimed values to the bounds.
    Compare(commands::CompareArgs),
    /// Full pipeline: induce, solve, refine-check, sections, agreement,
    /// horizon gaps, simulation, summary.
    Experiment(commands::ExperimentArgs),
}

fn dispatch(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure {n} worker threads: {e}")))?;
    }
    let cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.validate()?;
    let out = cfg.resolve_out(cli.out.as_deref());
    match &cli.command {
        Command::Induce(args) => commands::cmd_induce(&cfg, &out, args),
        Command::Vi(args) => commands::cmd_vi(&cfg, &out, args),
        Command::Strategy(args) => commands::cmd_strategy(&cfg, &out, args),
        Command::Section(args) => commands::cmd_section(&cfg, &out, args),
        Command::RefineCheck(args) => commands::cmd_refine_check(&cfg, &out, args),
        Command::Mc(args) => commands::cmd_mc(&cfg, &out, args),
        Command::Compare(args) => commands::cmd_compare(&cfg, &out, args),
        Command::Experiment(args) => commands::cmd_experiment(&cfg, &out, args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version print to stdout and succeed; genuine
            // parse errors print to stderr and exit with the usage code.
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code() as u8)
        }
    }
}
