//! Scenario files, the run/check/converge pipeline and the `kvn` binary's
//! building blocks.

pub mod config;
pub mod pipeline;

pub use config::{ConfigError, DomainSpec, InitialSpec, ScenarioConfig};
pub use pipeline::{check, converge, init_threads, load, run, simulate, ConvergenceTable, PipelineError};

/// Exit status contract of the binary.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const FAIL: u8 = 1;
    pub const USAGE: u8 = 2;
}
