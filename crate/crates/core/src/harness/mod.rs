//! Experiment harness: config parsing, deterministic run loops, gradient
//! self-checks, and CSV trace emission.

pub mod config;
pub mod csv;
pub mod fdcheck;
pub mod runner;

pub use config::{
    parse_config, serialize_config, DataSpec, ExperimentConfig, ExperimentKind, InitSpec,
    OptimizerName, OptimizerSpec, ProblemSpec,
};
pub use csv::{read_csv, write_csv};
pub use fdcheck::{finite_diff_check, MlpBatchProblem, ScalarProblem, SyntheticProblem};
pub use runner::{run_experiment, RegretCheckpoint, RunOutput, RunResult};
