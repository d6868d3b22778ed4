//! `dame`: generate synthetic corpora, run federated experiments and build
//! report tables.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for data and I/O
//! errors, 4 for failures during a run. Log verbosity follows `DAME_LOG`
//! (`error`, `warn`, `info`, `debug`, `trace`; default `info`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dame_core::config::ExperimentConfig;
use dame_core::federation::Strategy;
use dame_core::harness::{cmd_report, cmd_run, cmd_synth};
use dame_core::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "dame", version, about = "Federated social event detection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one record file per client from the config's synth spec.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replaces the generation seed of the synth spec.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Run every configured strategy for every repetition seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run a single repetition with this seed.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Comma-separated strategies (local, fedavg, dame); local is always run.
        #[arg(long, value_delimiter = ',')]
        strategy_override: Option<Vec<Strategy>>,
    },
    /// Build curve and comparison tables from a finished run directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Runtime => 4,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth {
            config,
            out,
            seed_override,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let manifest = cmd_synth(&cfg, &out, seed_override)?;
            println!("spec hash {}", manifest.spec_hash);
        }
        Command::Run {
            config,
            out,
            seed_override,
            strategy_override,
        } => {
            let results = cmd_run(&config, &out, seed_override, strategy_override)?;
            println!("config hash {}", results.config_hash);
        }
        Command::Report { out } => cmd_report(&out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DAME_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
