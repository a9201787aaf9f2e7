use std::process::ExitCode;

use clap::Parser;

use lsm_cli::args::Cli;
use lsm_cli::{exit_code, run, EXIT_SUITE_FAILED};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let mut stdout = std::io::stdout().lock();
    match run(&cli, &argv, &mut stdout) {
        Ok(o) if o.all_passed => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(EXIT_SUITE_FAILED as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
