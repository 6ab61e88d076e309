//! Configuration, orchestration and output for the `regretctl` binary.

pub mod config;
pub mod emit;
pub mod error;
pub mod presets;
pub mod run;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{parse_config, ExperimentConfig, Overrides};
pub use error::{CliError, Result};
pub use run::{run, Artifacts, Command};

use presets::{pendulum_config, PendulumMode};

/// Everything the command line can ask for.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub mode: Option<PendulumMode>,
    pub overrides: Overrides,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

fn resolve_config(inv: &Invocation) -> Result<ExperimentConfig> {
    let config = match (inv.command, &inv.config) {
        (Command::Pendulum, None) => pendulum_config(inv.mode.unwrap_or(PendulumMode::Stochastic))?,
        (Command::Pendulum, Some(_)) => {
            return Err(CliError::Usage("pendulum builds its own configuration; drop --config".into()))
        }
        (_, Some(path)) => {
            if inv.mode.is_some() {
                return Err(CliError::Usage("--mode only applies to the pendulum subcommand".into()));
            }
            load_config(path)?
        }
        (_, None) => return Err(CliError::Usage("--config <path> is required".into())),
    };
    config.with_overrides(&inv.overrides)
}

/// Runs the invocation, writes file artifacts and returns the text for
/// standard output.
pub fn execute(inv: &Invocation) -> Result<String> {
    let config = resolve_config(inv)?;
    let artifacts = run(inv.command, &config)?;
    let csv_path = inv.csv.clone().or_else(|| config.outputs.csv.clone());
    let json_path = inv.json.clone().or_else(|| config.outputs.json.clone());

    let mut stdout = artifacts.stdout.clone().unwrap_or_default();
    // The main artifact goes to standard output when no path is given.
    let primary_is_csv = artifacts.csv.is_some();
    if let Some(csv) = &artifacts.csv {
        match &csv_path {
            Some(p) => emit::write_file(p, csv)?,
            None => stdout.push_str(csv),
        }
    }
    if let Some(json) = &artifacts.json {
        match &json_path {
            Some(p) => emit::write_file(p, json)?,
            None if !primary_is_csv && artifacts.stdout.is_none() => stdout.push_str(json),
            None => {}
        }
    }
    Ok(stdout)
}
