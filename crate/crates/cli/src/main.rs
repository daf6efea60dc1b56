use std::process::ExitCode;

use brwld::commands::{run, Command};
use clap::Parser;

/// Large deviations of the right-most particle in branching random walks.
#[derive(Debug, Parser)]
#[command(name = "brwld", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("brwld: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
