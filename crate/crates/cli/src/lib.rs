//! Command-line driver: generate data, analyze, validate against refits,
//! reproduce the figure data and run the review service.

pub mod args;
pub mod commands;
pub mod manifest;
pub mod reproduce;
pub mod setup;

use anyhow::Result;

use args::{Cli, Command};

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Generate(a) => commands::generate(a).map(|_| 0),
        Command::Analyze(a) => commands::analyze(a),
        Command::Validate(a) => commands::validate_cmd(a).map(|_| 0),
        Command::Reproduce(a) => reproduce::run(a).map(|_| 0),
        Command::Serve(a) => commands::serve(a).map(|_| 0),
    }
}
