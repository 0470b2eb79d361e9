//! Scenario files, table output and the command implementations behind
//! the `squint` binary.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

mod commands;
pub mod scenario;
pub mod table;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{cmd_gainmap, cmd_localize, cmd_rmse, cmd_trajectory, CommandReport};
pub use scenario::ScenarioFile;
pub use table::{fmt_f64, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("cannot access {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) | CliError::Io { .. } => EXIT_RUNTIME,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Command-line settings that take precedence over the scenario file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub noiseless: bool,
}

impl Overrides {
    /// Folds the overrides into `scenario` so the config hash covers them.
    pub fn apply(&self, scenario: &mut ScenarioFile) {
        if let Some(seed) = self.seed {
            scenario.noise.seed = seed;
        }
        if self.noiseless {
            scenario.noise.snr_db = vec![scenario::NumberOr::Name("inf".into())];
        }
    }
}
