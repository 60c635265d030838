//! `mixlab`: learners, protocols, theory checks and batch experiments from the
//! command line.
//!
//! Exit codes: 0 on success, 1 when a check or replay fails, 2 for usage errors
//! and violated preconditions.

mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
