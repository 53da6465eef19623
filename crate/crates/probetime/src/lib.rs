//! File formats, checkpoint storage, run configuration and the `probetime`
//! command line around the `probetime-core` engine.
//!
//! A run lives under one output directory:
//! `data/` (synthetic corpus and probe suites), `checkpoints/<run_tag>/step_<N>/`,
//! `results/` (`done.jsonl` ledger and `records.csv`) and `analysis/`
//! (`report.json`, `series.csv`, `plots/`).

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod plot;

pub use cli::run;
pub use error::{CliError, CliResult};
