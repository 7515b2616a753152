//! `slabcode` command-line front end and the review HTTP service.
//!
//! Exit codes: 0 success, 1 error, 2 an image decoded to no bands.

pub mod args;
pub mod commands;
pub mod records;
pub mod service;

pub use args::{Cli, Command};

use std::process::ExitCode;

/// Outcome of a command that completed without an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NoBands,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::NoBands => 2,
        }
    }
}

/// Runs a parsed command line, printing errors to stderr.
pub fn run(cli: Cli) -> ExitCode {
    match commands::dispatch(cli) {
        Ok(status) => ExitCode::from(status.exit_code()),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
