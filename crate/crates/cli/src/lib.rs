//! Experiment harness around the `pdgmm` library: benchmark generation, training,
//! evaluation and ablation grids, with hash-checked artifacts on disk.

pub mod commands;
pub mod config;
pub mod error;
pub mod grid;

pub use commands::{evaluate, generate, run_all, train};
pub use config::{Axis, ExperimentConfig, Layout, Stream, OUT_ENV};
pub use error::CliError;
pub use grid::{grid, GridOutcome};
