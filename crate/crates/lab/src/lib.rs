//! Experiment runner for `nullfold-core`: TOML configuration, the invariant
//! battery, CSV and JSON outputs, and the `nullfold` command line.

pub mod battery;
pub mod catalog;
pub mod config;
pub mod inline;
pub mod report;
pub mod run;

pub use config::{ConfigError, ExperimentConfig, Settings};
pub use report::{CheckRecord, DiagnosticsReport, Status};
pub use run::{check_suite, run_experiment, run_settings, RunError};

use nullfold_core::systems::{ExampleInfo, REGISTRY};

pub fn list_examples() -> &'static [ExampleInfo] {
    &REGISTRY
}
