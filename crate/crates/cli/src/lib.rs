//! Command-line front end for `brwld-core`.
//!
//! Models are read from JSON files, results are written as CSV (optionally
//! with an SVG plot) or JSON.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod runner;
pub mod table;
pub mod verify;

pub use config::{load_model, ModelConfig, RunModel};
pub use error::CliError;
pub use runner::Threads;

/// Seed used when `--seed` is not given (`0x5EED`).
pub const DEFAULT_SEED: u64 = 24310;
