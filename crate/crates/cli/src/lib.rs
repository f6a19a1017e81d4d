//! Experiment harness for the `sppm-core` methods: JSON configs, figure
//! presets, CSV and SVG output, certificates and the verification runner.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod presets;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
