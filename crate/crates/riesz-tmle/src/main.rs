use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use riesz_tmle::commands::{cmd_estimate, cmd_simulate, cmd_truth, emit};
use riesz_tmle::config::keys_help;
use riesz_tmle::{CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "riesz-tmle",
    version,
    about = "Doubly robust estimation of linear functionals with Riesz representers",
    after_long_help = keys_help(),
    after_help = "Run with --help to list every configuration key and its default."
)]
struct Cli {
    /// Overrides every seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppresses progress messages.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimates the configured functional from a CSV file and writes the report.
    #[command(after_long_help = keys_help())]
    Estimate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Runs the Monte Carlo replications and writes the metrics table.
    #[command(after_long_help = keys_help())]
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Computes the oracle truth and efficiency bound of a simulation design.
    #[command(after_long_help = keys_help())]
    Truth {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let (Command::Estimate { config } | Command::Simulate { config } | Command::Truth { config }) = &cli.command;
    let cfg = RunConfig::load(config)?.with_seed(cli.seed);
    match &cli.command {
        Command::Estimate { .. } => {
            if let Some(text) = emit(&cfg, &cmd_estimate(&cfg)?)? {
                print!("{text}");
            }
        }
        Command::Truth { .. } => {
            if let Some(text) = emit(&cfg, &cmd_truth(&cfg)?)? {
                print!("{text}");
            }
        }
        Command::Simulate { .. } => {
            let (table, written) = cmd_simulate(&cfg)?;
            if written.is_empty() {
                print!("{}", riesz_tmle::commands::pretty(&riesz_tmle::io::metrics_json(&table)));
            }
            if !cli.quiet {
                eprintln!(
                    "{} replication fits, {} failed{}",
                    table.attempts,
                    table.failures,
                    if table.flagged { " (more than 1%: flagged)" } else { "" }
                );
                for p in written {
                    eprintln!("wrote {}", p.display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
