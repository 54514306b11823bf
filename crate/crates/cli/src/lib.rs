//! Command-line front end: experiment configs, run directories, plots and
//! scaling audits over PLS simulations.

pub mod audit;
pub mod config;
pub mod error;
pub mod plot;
pub mod run;

pub use config::ExperimentConfig;
pub use error::CliError;
