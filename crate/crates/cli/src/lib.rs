//! Command-line front end: `train`, `eval` and `report`.
//!
//! Output layout under the output root:
//!
//! ```text
//! {shielded|unshielded}/summary.json
//! {shielded|unshielded}/run_XX/metrics.csv
//! {shielded|unshielded}/run_XX/checkpoint.bin
//! shielded/run_XX/shield_diagnostics.csv
//! eval/trajectory.csv, eval/eval_summary.json, eval/episode_XX_*.svg
//! report.md, reward_curve.svg
//! ```

pub mod args;
pub mod artifacts;
pub mod config;
pub mod error;
pub mod eval;
pub mod report;
pub mod svg;
pub mod train;

pub use args::{execute, Cli};
pub use error::CliError;
