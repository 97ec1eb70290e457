//! Scenario files, CSV/JSON outputs and the `hybridlab` command line on top
//! of `hybridlab-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod output;

pub use config::{load_scenario, parse_scenario, Overrides, Provenance, Scenario};
pub use error::LabError;
