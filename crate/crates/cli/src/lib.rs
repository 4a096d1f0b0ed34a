//! Experiment harness: configs, the benchmark registry, persisted run
//! artifacts, comparison reports and trace export.

pub mod cli;
pub mod config;
pub mod error;
pub mod export;
pub mod registry;
pub mod report;
pub mod runner;

pub use config::{DatasetSpec, ExperimentConfig, StrategyChoice};
pub use error::HarnessError;
pub use registry::{build_objective, load_dataset, registry_lookup, BenchmarkEntry, Objective, BENCHMARK_NAMES};
pub use report::{compare, compare_dirs, render_text, ComparisonReport};
pub use runner::{load_artifacts, run_experiment, RunArtifact};
