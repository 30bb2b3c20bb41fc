//! Configuration, execution and output formats of the `colltraj` command.

pub mod config;
pub mod output;
pub mod run;

pub use config::{CouplingSpec, Mode, OracleSpec, RunConfigFile, SchemeSpec};
pub use output::{RunManifest, RunStatus, MANIFEST};
pub use run::{run, RunOptions};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit code: 1 for configuration errors, 2 for failures during the run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
