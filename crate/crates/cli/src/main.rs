use std::process::ExitCode;

use clap::Parser;
use simplex_cli::cli::Cli;
use simplex_cli::commands::run;
use simplex_cli::error::exit_for;
use simplex_cli::threads_from_env;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|threads| {
        if let Some(n) = threads {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
        run(&cli.command)
    });
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_for(&e) as u8)
        }
    }
}
