//! Experiment configuration and orchestration.
//!
//! A run is described by one flat JSON [`ExperimentConfig`]. The drivers in
//! [`experiments`] build the problem, run the iteration and write CSV, JSON
//! and PGM artifacts; [`verify`] holds the diagnostics suite.

pub mod config;
pub mod experiments;
pub mod synth;
pub mod verify;

pub use config::ExperimentConfig;
pub use experiments::{build_problem, compare, run_problem, semiconv, solve, sure, Problem, RunOutput};

use crate::error::Error;

/// Process exit code for an error: 1 for I/O, 3 for divergence, 2 otherwise.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 1,
        Error::Divergence { .. } => 3,
        _ => 2,
    }
}
