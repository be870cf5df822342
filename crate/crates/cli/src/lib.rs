//! Experiment harness for `ahead-core`: configuration files, run
//! orchestration, parameter sweeps, bound re-checks and dataset generation.

// `!(v > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod check;
pub mod cli;
pub mod config;
pub mod error;
pub mod gen_data;
pub mod instance;
pub mod run;
pub mod sweep;

pub use config::{parse_config, ExperimentConfig};
pub use error::{CliError, Result};
pub use run::{execute, RunOutcome};
