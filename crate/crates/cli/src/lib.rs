//! Configuration-driven experiment runner for `ef-lab-core`.

pub mod commands;
pub mod config;
pub mod output;
pub mod reproduce;
pub mod svg;

pub use commands::{cmd_run, cmd_selftest, cmd_sweep, RunReport, SweepReport};
pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, LrGrid};
pub use reproduce::{reproduce, verdict, ReproOptions, Reproduction, Verdict};

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const FAIL: i32 = 1;
    pub const USAGE: i32 = 2;
}
