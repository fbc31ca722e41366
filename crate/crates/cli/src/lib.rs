//! Command-line front end for `crgen`.
//!
//! Every subcommand reads the same flat [`ExperimentConfig`]; results go to
//! stdout or `--output` as CSV or JSON lines, each row carrying the digest of
//! the configuration that produced it.

pub mod commands;
pub mod config;

use std::io::Write;

pub use config::ExperimentConfig;

/// Exit status for a successful run.
pub const EXIT_OK: i32 = 0;
/// Bad flags, bad configuration, unreadable input.
pub const EXIT_CONFIG: i32 = 2;
/// Refused by a resource guard or queried outside a bound's regime.
pub const EXIT_REFUSED: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error(transparent)]
    Core(#[from] crgen_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("output error: {0}")]
    Csv(#[from] csv::Error),
    #[error("output error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use crgen_core::Error as E;
        match self {
            CliError::Core(E::ResourceLimit(_) | E::OutOfRegime(_) | E::InsufficientData(_)) => EXIT_REFUSED,
            CliError::Clap(e) if !e.use_stderr() => EXIT_OK,
            _ => EXIT_CONFIG,
        }
    }
}

/// Runs one invocation; `argv[0]` is the program name.
pub fn run(argv: Vec<String>) -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    match ExperimentConfig::from_argv(&argv).and_then(|cfg| commands::execute(&cfg)) {
        Ok(()) => EXIT_OK,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            let code = e.exit_code();
            let _ = writeln!(std::io::stderr(), "crgen: {e}");
            code
        }
    }
}
