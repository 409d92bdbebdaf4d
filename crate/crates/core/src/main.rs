use std::process::ExitCode;

use clap::Parser;
use holographic::cli::{execute, exit_code, Cli, Outcome};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = execute(&cli);
    match &result {
        Ok(Outcome::Success) => {}
        Ok(Outcome::Failed(msg)) => eprintln!("failed: {msg}"),
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result))
}
