//! Experiment driver for distributional adversarial training studies.
//!
//! The binary exposes four subcommands — `train`, `eval`, `analyze`,
//! `sweep` — over the [`dan_core`] building blocks; this library holds
//! their implementations plus the config schema and built-in profiles so
//! integration suites can drive experiments in-process.

pub mod commands;
pub mod config;
pub mod profiles;

pub use commands::CliError;
