//! Experiment runner for consensus Volt-VAR control.
//!
//! [`config`] parses and resolves experiment files, [`validate`] checks them
//! statically, [`run`] executes seeded experiments and writes their artifacts,
//! and [`summarize`] aggregates finished runs across seeds.

pub mod config;
pub mod run;
pub mod summarize;
pub mod validate;

pub use config::ExperimentConfig;
