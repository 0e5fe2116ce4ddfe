//! Experiment harness around `lqropt-core`: JSON configs, CSV traces,
//! summary reports and the randomized property suite.

pub mod config;
pub mod experiment;
pub mod report;
pub mod suite;

pub use config::{load_config, paper_sec5_config, parse_config, ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, write_outputs, ExitStatus, ExperimentReport};
pub use suite::{run_property_suite, SuiteReport};
