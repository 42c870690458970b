//! Experiment orchestration for video-based surgical skill assessment:
//! configuration, corpus handling, cached feature extraction, nested
//! cross-validation of every method, and report tables.

pub mod cache;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod extract;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, MethodName, Task};
pub use error::{RunError, RunResult, Stage};
pub use experiment::{run_experiment, ResultsManifest};
