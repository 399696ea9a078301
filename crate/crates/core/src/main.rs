use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use blowup_lab::harness::{self, HarnessError};

#[derive(Parser)]
#[command(name = "blowup-lab", version, about = "Finite-time blowup laboratory for a pseudo-parabolic equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the embedding constants and every derived constant.
    Constants {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one trajectory to blowup and verify it.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every configuration of the `[sweep]` table.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-verify a trajectory CSV against a constants JSON.
    Verify {
        trajectory: PathBuf,
        constants: PathBuf,
        /// Supplies tolerances and the blowup threshold.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Constants { config, out } => {
            let config = harness::load_config(&config)?;
            let dir = harness::resolve_output_dir(&config, out.as_deref());
            let report = harness::cmd_constants(&config, &dir)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Simulate { config, out } => {
            let config = harness::load_config(&config)?;
            let dir = harness::resolve_output_dir(&config, out.as_deref());
            match harness::cmd_simulate(&config, &dir) {
                Ok(outcome) => print!("{}", outcome.verification),
                Err(err @ HarnessError::VerificationFailed { .. }) => {
                    if let Ok(text) = std::fs::read_to_string(dir.join(harness::SUMMARY_FILE)) {
                        print!("{text}");
                    }
                    return Err(err);
                }
                Err(err) => return Err(err),
            }
        }
        Command::Sweep { config, out } => {
            let config = harness::load_config(&config)?;
            let dir = harness::resolve_output_dir(&config, out.as_deref());
            let rows = harness::cmd_sweep(&config, &dir)?;
            println!("{} sweep rows written to {}", rows.len(), dir.join(harness::SWEEP_FILE).display());
        }
        Command::Verify {
            trajectory,
            constants,
            config,
            out,
        } => {
            let config = config.as_deref().map(harness::load_config).transpose()?;
            let dir = match (&config, out) {
                (_, Some(out)) => out,
                (Some(c), None) => harness::resolve_output_dir(c, None),
                (None, None) => std::env::var_os(harness::OUTPUT_DIR_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from(".")),
            };
            let report = harness::cmd_verify(&trajectory, &constants, config.as_ref(), &dir)?;
            print!("{report}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
