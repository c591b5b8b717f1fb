//! Config-driven experiment runner.

pub mod config;
pub mod experiment;
pub mod output;

pub use config::{EnvironmentSpec, ExperimentConfig, GreedySpec, PolicySpec, RatingsSource, PRESETS};
pub use experiment::{
    build_environment, build_policy, generate_log, run_experiment, CellError, Experiment, GroundTruth, ResultRow,
    ResultTable,
};
pub use output::{emit_outputs, write_results_csv, OutputFiles};
