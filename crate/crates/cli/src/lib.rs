//! Command-line harness: configs, the end-to-end experiment pipeline and
//! its report files.

pub mod cli;
pub mod config;
pub mod output;
pub mod pipeline;

pub use cli::{run, Cli, Command};
pub use config::ExperimentConfig;
pub use pipeline::{run_experiment, RunReport, Timings};
