use std::process::ExitCode;

use recfno::cli::{exit_code, run, CliError};

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(_) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            let _ = e.print();
            ExitCode::from(if e.use_stderr() { 2 } else { 0 })
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
