use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = qsync::cli::Cli::parse();
    match qsync::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qsync: {e}");
            e.into()
        }
    }
}
