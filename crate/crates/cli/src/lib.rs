//! Experiment runner for the two-scale scheme: JSON configs, named presets
//! and CSV/JSON output.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod selfcheck;

pub use commands::{cmd_compare, cmd_convergence, cmd_run, Outcome};
pub use config::{ConfigError, ExperimentConfig};
