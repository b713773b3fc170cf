//! `gcnn-vmc`: train, exactly diagonalize, compare maskings, and verify checkpoints.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "gcnn-vmc", version, about = "Variational Monte Carlo with group-equivariant networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write trace, checkpoint and summary.
    Train(RunArgs),
    /// Exact ground state in the zero-magnetization sector.
    Ed {
        #[command(flatten)]
        run: RunArgs,
        /// Also write the ground-state vector as a binary dump.
        #[arg(long)]
        dump_vector: bool,
    },
    /// Train one network per masking mode from a shared seed.
    MaskingExperiment(RunArgs),
    /// Reload a checkpoint, re-estimate its energy and check the symmetry invariants.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Training summary to compare against; defaults to `summary.json` beside the checkpoint.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (`desk` or `large`) instead of a file.
    #[arg(long)]
    preset: Option<String>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker cap. Runs are currently serial, so any value ≥ 1 behaves like 1.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Override the configured output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(run) => commands::train(&run),
        Command::Ed { run, dump_vector } => commands::ed(&run, dump_vector),
        Command::MaskingExperiment(run) => commands::masking_experiment(&run),
        Command::Verify { run, checkpoint, summary } => commands::verify(&run, &checkpoint, summary.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code())
        }
    }
}

impl RunArgs {
    fn load(&self) -> Result<gcnn_vmc::config::RunConfig, CliError> {
        use gcnn_vmc::config::RunConfig;
        if self.threads == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        let mut config = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                RunConfig::from_toml_str(&text)?
            }
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => unreachable!("clap requires one of --config/--preset"),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.output {
            config.output_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    }
}
