//! Command-line front end of `simplex-core`: training, prediction,
//! evaluation, regularization paths, theory checks and benchmark tables.

pub mod artifact;
pub mod bench;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod fit;
pub mod input;

pub use artifact::ModelArtifact;
pub use config::SolverConfig;
pub use error::Exit;

/// Size of the global thread pool from `SIMPLEX_THREADS`, if set.
pub fn threads_from_env() -> anyhow::Result<Option<usize>> {
    match std::env::var("SIMPLEX_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(error::usage(format!("SIMPLEX_THREADS must be a positive integer, got `{v}`"))),
        },
    }
}
