//! Subcommand implementations shared by the binary and the tests.

mod commands;
mod config;

pub use commands::{
    exit_code, load_samples, run_explain, run_global_explain, run_pfm, run_synth, run_train, ExplainOutput,
    TrainOutcome,
};
pub use config::{RunConfig, KEYS};
