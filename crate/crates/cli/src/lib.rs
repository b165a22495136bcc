//! Command-line front end: TOML configuration, the five subcommands, and
//! CSV/JSON output.

// `!(x > 0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod record;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::Parser;

pub use commands::{execute, render, summary, Command};
pub use config::{load_config, Format, RunConfig};
pub use error::{CliError, Result};
pub use record::ResultRecord;

#[derive(Debug, Parser)]
#[command(name = "blangevin", version, about = "Bath-corrected Berry phases of a spin in a precessing field")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Dotted-path override, e.g. `protocol.theta=1.0`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Output file; standard output when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

/// Loads the configuration, runs the command and writes its output.
pub fn run(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Invalid("--config PATH is required".into()))?;
    let config = load_config(path, &cli.overrides)?;
    let format = cli.format.unwrap_or(config.output.format);
    let destination = cli.output.clone().or_else(|| config.output.path.clone());
    let record = execute(cli.command, &config)?;
    let bytes = render(&record, cli.command, format)?;
    let digest = summary(&record);
    match destination {
        Some(path) => {
            fs::write(&path, &bytes).map_err(|source| CliError::Write { path, source })?;
            print!("{digest}");
        }
        None => {
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|source| CliError::Write {
                    path: "<stdout>".into(),
                    source,
                })?;
            eprint!("{digest}");
        }
    }
    Ok(())
}
