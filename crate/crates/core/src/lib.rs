//! Consensus multi-agent reinforcement learning for Volt-VAR control.

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod benchmarks;
pub mod consensus;
pub mod env;
pub mod failures;
pub mod feeder;
pub mod nn;
