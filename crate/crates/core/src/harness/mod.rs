//! Command-line harness: configuration files, figure fixtures, result
//! bundles, sweeps and export.

pub mod bundle;
pub mod cli;
pub mod config;
pub mod fixtures;
pub mod formats;
pub mod sweeps;

use std::fmt;

use crate::error::Error;

pub use bundle::{export, run_config, run_file, ExportFormat, RunOutcome};
pub use config::{ResolvedRun, RunConfig, SolverConfig, SweepConfig};
pub use fixtures::{fixture, list_fixtures, Fixture};

/// Exit status for configuration problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for failures while running.
pub const EXIT_RUNTIME: i32 = 1;

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub error: Error,
}

impl Failure {
    pub fn stage(stage: &'static str) -> impl Fn(Error) -> Failure {
        move |error| Failure { stage, error }
    }

    pub fn exit_code(&self) -> i32 {
        match self.error {
            Error::Config(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for Failure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}
