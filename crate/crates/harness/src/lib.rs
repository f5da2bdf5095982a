//! Command-line harness for the `ermrer` core: JSON experiment configs,
//! CSV/JSON result files, and the verification suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod build;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod error;
pub mod output;
pub mod verify;

pub use commands::{run, Command, RunOptions, RunOutcome};
pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
