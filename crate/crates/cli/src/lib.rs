//! Operator layer: configuration files, experiment runs, sweeps, the
//! intensity optimizer, peer sessions and report output.

pub mod config;
pub mod error;
pub mod experiment;
pub mod peer;
pub mod report;
pub mod selftest;

pub use config::{load_config, parse_config, Engine, ExperimentConfig, Format};
pub use error::{CliError, Result};
pub use experiment::{optimize_mu, run_experiment, sweep, MuGrid, MuOptimum};
pub use report::ReportRow;
