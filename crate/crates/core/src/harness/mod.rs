//! Experiment configuration, orchestration, and reporting.

pub mod config;
pub mod experiment;
pub mod regret;
pub mod report;

pub use config::{derive_seed, Benchmark, ExperimentConfig, Levels, Mode};
pub use experiment::{load_corpus, run_experiment, run_on_traces, RunOutput, SOCIAL_FORECAST};
pub use regret::{arrival_stream, oracle_experiment, regret_experiment};
pub use report::Report;
