//! Std companion to `uniband-core`: CSV and JSON file formats, a rayon
//! draw executor, Monte Carlo coverage experiments and the `uniband` CLI.

pub mod cli;
pub mod error;
pub mod io;
pub mod parallel;
pub mod sim;

pub use error::AppError;
pub use parallel::{with_threads, Rayon};
pub use sim::{coverage_run, CoverageConfig, CoverageReport, Dgp};
