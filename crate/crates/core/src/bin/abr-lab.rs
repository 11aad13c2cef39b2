use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abr_lab::cli_io::{parse_config, run_experiment, run_sweep, sweep_configs, ExperimentConfig, RunError};
use clap::{Parser, Subcommand};

/// Overrides `output.dir` of every configuration.
const OUTPUT_ENV: &str = "ABRLAB_OUTPUT_DIR";

#[derive(Parser)]
#[command(version, about = "Detection-time experiments for absorbing boundaries, soft detectors and GRW collapses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run { config: PathBuf },
    /// Check a configuration and print it with defaults filled in.
    Validate { config: PathBuf },
    /// Run one experiment per value of a configuration key.
    Sweep {
        config: PathBuf,
        /// Key to vary, as `section.key`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}

fn with_env_dir(mut c: ExperimentConfig) -> ExperimentConfig {
    if let Some(dir) = std::env::var_os(OUTPUT_ENV) {
        c.output.dir = dir.into();
    }
    c
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn report(a: &abr_lab::cli_io::RunArtifacts) {
    println!("{}", a.manifest.display());
    for f in &a.files {
        println!("{}", f.display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => read(&config)
            .and_then(|t| parse_config(&t).map_err(RunError::from))
            .map(|c| print!("{}", with_env_dir(c).to_text())),
        Command::Run { config } => read(&config)
            .and_then(|t| parse_config(&t).map_err(RunError::from))
            .and_then(|c| run_experiment(&with_env_dir(c)))
            .map(|a| report(&a)),
        Command::Sweep { config, param, values } => {
            let configs = read(&config).and_then(|t| sweep_configs(&t, &param, &values).map_err(RunError::from));
            match configs {
                Err(e) => Err(e),
                Ok(cs) => {
                    let cs: Vec<_> = cs.into_iter().map(with_env_dir).collect();
                    let mut first_err = None;
                    for r in run_sweep(&cs) {
                        match r {
                            Ok(a) => report(&a),
                            Err(e) => {
                                eprintln!("{}", e.to_json());
                                first_err.get_or_insert(e);
                            }
                        }
                    }
                    first_err.map_or(Ok(()), Err)
                }
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
