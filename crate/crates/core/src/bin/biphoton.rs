use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use biphoton::scenario::{emit_outputs, run_scenario, RunOptions, Scenario};

const EXIT_IO: u8 = 1;
const EXIT_SCHEMA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "biphoton", version, about = "Simulate shaped energy-time entangled photon pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a scenario file and write the artifacts.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Overwrite existing outputs.
        #[arg(long)]
        force: bool,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run experiments concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Check a scenario file without running it.
    Validate { config: PathBuf },
}

fn load(config: &PathBuf) -> Result<Scenario, ExitCode> {
    if !config.exists() {
        eprintln!("error: {}: no such file", config.display());
        return Err(ExitCode::from(EXIT_IO));
    }
    Scenario::from_path(config).map_err(|e| {
        eprintln!("schema error: {e}");
        ExitCode::from(EXIT_SCHEMA)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(s) => {
                println!("{}: ok ({} experiments)", config.display(), s.experiments.len());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run {
            config,
            out,
            force,
            seed,
            parallel,
        } => {
            let scenario = match load(&config) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let run = match run_scenario(&scenario, &RunOptions { seed, parallel }) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("numerical error: {e}");
                    return ExitCode::from(EXIT_NUMERIC);
                }
            };
            for exp in &run.experiments {
                println!("{:<18} {}", exp.experiment, exp.summary);
            }
            match emit_outputs(&run, &out, force) {
                Ok(manifest) => {
                    println!("wrote {} artifacts and a report to {}", manifest.entries.len(), out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_IO)
                }
            }
        }
    }
}
