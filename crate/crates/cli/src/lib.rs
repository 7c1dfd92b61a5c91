//! Batch front end: run configuration, the five subcommands and their
//! CSV/JSON artifacts.

pub mod commands;
pub mod config;
mod output;

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub use commands::{run, Command, RunOutcome};
pub use config::RunConfig;

/// Name of the file written before any work starts.
pub const MANIFEST: &str = "manifest.json";
/// Name of the file written once the run has finished, successfully or not.
pub const COMPLETION_MARKER: &str = "run_complete.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] storage_planner::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> CliError {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        use storage_planner::ErrorKind::*;
        match self {
            CliError::Core(e) => match e.kind() {
                ParseError => "ParseError",
                ValidationError => "ValidationError",
                ConfigError => "ConfigError",
                ShapeError => "ShapeError",
                SingularityError => "SingularityError",
                ImbalanceError => "ImbalanceError",
                InfeasibleError => "InfeasibleError",
                NumericalError => "NumericalError",
            },
            CliError::Io { .. } => "IoError",
            CliError::Config(_) => "ConfigError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => e.kind().exit_code(),
            CliError::Io { .. } | CliError::Config(_) => 1,
        }
    }

    /// The error as the JSON object reported on standard error.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            kind: &'a str,
            message: String,
        }
        serde_json::to_string(&Report {
            kind: self.kind(),
            message: self.to_string(),
        })
        .expect("error report serializes")
    }
}

impl From<storage_planner::grid::GridError> for CliError {
    fn from(e: storage_planner::grid::GridError) -> Self {
        CliError::Core(e.into())
    }
}
