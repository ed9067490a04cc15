//! Experiment configuration, seed sweeps and CSV output for the
//! `minimax-gda` command-line tool.

pub mod config;
pub mod error;
pub mod output;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
