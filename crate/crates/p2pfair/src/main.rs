use std::process::ExitCode;

use clap::Parser;
use p2pfair::app::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("p2pfair: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
