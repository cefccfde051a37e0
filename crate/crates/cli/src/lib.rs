//! Command-line driver for the cooperative mining model.
//!
//! A run is described by one TOML file naming a scenario (`pool-solve`,
//! `protocol`, `shares`, `scenario-table`, `dilemma-sim`, `stationary` or
//! `sweep`). Results are written as CSV files with twelve significant digits.

pub mod config;
pub mod error;
pub mod format;
pub mod run;

pub use config::{load_config, RunConfig, ScenarioKind};
pub use error::CliError;
pub use run::{run_scenario, RunOptions, RunReport};
