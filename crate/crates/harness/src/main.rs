use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mlsa::{commands, config, HarnessError};

#[derive(Parser)]
#[command(name = "mlsa", version, about = "Averaged linear stochastic approximation on Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    config: PathBuf,
    /// Override a config key, e.g. `--set experiment.replications=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact instance report: constants, noise covariances, radii, bounds.
    Diagnose(Common),
    /// A single averaged SA run.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replicated sweep over horizons.
    Sweep(Common),
    /// Plug-in choice of the TD(λ) trace parameter.
    SelectLambda(Common),
    /// VAR coefficient estimation and autocovariance report.
    VarFit(Common),
    /// Total-variation mixing time of the model's chain.
    Mixing(Common),
}

fn dispatch(cli: Cli) -> Result<String, HarnessError> {
    mlsa::init_threads()?;
    let load = |c: &Common| config::load(&c.config, &c.overrides);
    match cli.command {
        Command::Diagnose(c) => commands::diagnose(&load(&c)?),
        Command::Run { common, n, seed } => commands::run(&load(&common)?, n, seed),
        Command::Sweep(c) => commands::sweep(&load(&c)?),
        Command::SelectLambda(c) => commands::select_lambda(&load(&c)?),
        Command::VarFit(c) => commands::var_fit(&load(&c)?),
        Command::Mixing(c) => commands::mixing(&load(&c)?),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
