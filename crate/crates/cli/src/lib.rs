//! Experiment pipelines behind the `koopq` binary.
//!
//! Every experiment has a typed parameter struct with defaults and a typed
//! `run` function, so the pipelines can be driven from tests as well as from
//! configuration files. [`run_experiment`] wraps them into a uniform
//! [`Report`] that the binary writes to disk.

pub mod compare;
pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

pub use compare::{compare_to_reference, Comparison, MetricGap};
pub use config::ConfigFile;
pub use error::CliError;
pub use experiments::{run_experiment, Experiment};
pub use report::{Check, Report, Table};
