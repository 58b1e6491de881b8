//! Experiment harness for `divbo-core`.
//!
//! Dataset ingestion and splitting, OpenML downloads, benchmark orchestration
//! over methods and seeds, the surrogate-quality experiment, rank statistics
//! and report files. The `divbo` binary wraps these as CLI verbs.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod openml;
pub mod report;
pub mod rundir;
pub mod stats;

pub use dataset::{ingest_csv, Dataset};
pub use error::{HarnessError, Result};
pub use experiment::{ProblemSpec, RunRow};
pub use report::ExperimentReport;
