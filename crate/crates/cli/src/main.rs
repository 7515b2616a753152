use std::process::ExitCode;

use clap::Parser;
use slabcode_cli::Cli;

fn main() -> ExitCode {
    slabcode_cli::run(Cli::parse())
}
