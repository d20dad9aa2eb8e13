use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use closedloop::config::{ExperimentConfig, Overrides};
use closedloop::experiment::{error_exit_code, run_experiment, Command};

#[derive(Parser)]
#[command(version, about = "Closed-loop equilibrium strategies under random coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve the backward system named by the config and dump the operator.
    Solve(Common),
    /// Run the perturbation test suite against an operator.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Operator dump to verify instead of re-solving.
        #[arg(long)]
        operator: Option<PathBuf>,
    },
    /// Compare closed-loop and open-loop operators.
    Compare(Common),
    /// Solve the hedging problem and report the variance reduction.
    Hedge(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    config: PathBuf,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common, operator) = match cli.command {
        Sub::Solve(c) => (Command::Solve, c, None),
        Sub::Verify { common, operator } => (Command::Verify, common, operator),
        Sub::Compare(c) => (Command::Compare, c, None),
        Sub::Hedge(c) => (Command::Hedge, c, None),
    };
    let overrides = Overrides {
        paths: common.paths,
        steps: common.steps,
        seed: common.seed,
        out: common.out,
    };
    let result = ExperimentConfig::load(&common.config)
        .and_then(|mut cfg| cfg.apply(&overrides).map(|_| cfg))
        .and_then(|cfg| run_experiment(command, &cfg, operator.as_deref()));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
