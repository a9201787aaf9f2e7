//! Command-line front-end. `main` only maps [`run`] results to exit codes.

pub mod args;
mod commands;
pub mod io;

use std::io::Write;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};
use io::{config_error, ConfigError, RunManifest};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_SUITE_FAILED: i32 = 4;

/// Environment variable that fixes the number of worker threads.
pub const WORKERS_ENV: &str = "LSM_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    /// False only when `validate` ran and a suite failed.
    pub all_passed: bool,
}

fn workers() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(config_error(format!("{WORKERS_ENV}: {e}"))),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(config_error(format!(
                "{WORKERS_ENV} must be a positive integer, got '{v}'"
            ))),
        },
    }
}

/// Runs a parsed command. `argv` excludes the program name and is recorded
/// in output manifests.
pub fn run(cli: &Cli, argv: &[String], stdout: &mut dyn Write) -> Result<Outcome> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = workers()? {
            b = b.num_threads(n);
        }
        b.build().context("starting worker pool")?
    };
    let (result, buf) = pool.install(|| {
        let mut buf = Vec::new();
        (dispatch(cli, argv, &mut buf), buf)
    });
    stdout.write_all(&buf)?;
    stdout.flush()?;
    result
}

fn dispatch(cli: &Cli, argv: &[String], stdout: &mut dyn Write) -> Result<Outcome> {
    let ok = Outcome { all_passed: true };
    match &cli.command {
        Command::Score(a) => commands::score(a, argv, stdout).map(|_| ok),
        Command::Study1(a) => commands::study1(a, argv, stdout).map(|_| ok),
        Command::Temporal(a) => commands::temporal(a, argv, stdout).map(|_| ok),
        Command::Validate(a) => {
            commands::validate(a, argv, stdout).map(|all_passed| Outcome { all_passed })
        }
        Command::Synth(a) => commands::synth(a, argv, stdout).map(|_| ok),
        Command::Replay(a) => replay(&a.file, stdout),
    }
}

fn replay(file: &std::path::Path, stdout: &mut dyn Write) -> Result<Outcome> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| config_error(format!("cannot read {}: {e}", file.display())))?;
    let manifest = RunManifest::from_output(&text).map_err(|e| config_error(format!("{e:#}")))?;
    if manifest.command == "replay" {
        return Err(config_error("manifest records a replay"));
    }
    let mut full = vec!["lsm".to_string()];
    full.extend(manifest.args.iter().cloned());
    let cli =
        Cli::try_parse_from(&full).map_err(|e| config_error(format!("recorded arguments: {e}")))?;
    dispatch(&cli, &manifest.args, stdout)
}

/// Exit code for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.is::<ConfigError>()) {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}
