use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use simctl::{preprocess, profile, report, simulate, CliError, PreprocessArgs};
use socsim::trace::{FilterCriteria, DEFAULT_GRID_SECONDS};

#[derive(Parser)]
#[command(name = "simctl", version, about = "Battery-trace preprocessing, SoC profiling and federated-learning simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter, resample and time-shift a raw battery trace CSV.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Extra one-hour-shifted copies per accepted trace.
        #[arg(long, default_value_t = 23)]
        shifts: u32,
        #[arg(long, default_value_t = DEFAULT_GRID_SECONDS)]
        grid_seconds: i64,
    },
    /// Write the profile database for every configured soc and workload.
    Profile {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the federated simulation for each configured policy.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare simulate output directories.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Where to write the tables; defaults to the first directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preprocess {
            input,
            out,
            shifts,
            grid_seconds,
        } => {
            let s = preprocess(&PreprocessArgs {
                input,
                out,
                shifts,
                grid_seconds,
                criteria: FilterCriteria::default(),
            })?;
            println!("accepted {} rejected {} clients {}", s.accepted, s.rejected, s.clients);
        }
        Command::Profile { config, out } => {
            let db = profile(&config, &out)?;
            let n: usize = db.sets.iter().map(|s| s.profiles.len()).sum();
            println!("{n} profiles in {} sets -> {}", db.sets.len(), out.display());
        }
        Command::Simulate { config, out } => {
            let s = simulate(&config, &out)?;
            for (policy, p) in &s.policies {
                println!(
                    "{policy}: {} rounds, best accuracy {:.4}, {:.1} J",
                    p.rounds, p.best_accuracy, p.total_energy_joules
                );
            }
            if let Some(speedup) = s.speedup {
                println!("time-to-target speedup {speedup:.2}x");
            }
        }
        Command::Report { dirs, out } => {
            let path = report(&dirs, out.as_deref())?;
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simctl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
