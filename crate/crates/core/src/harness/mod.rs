//! Experiment harness: configuration, orchestration, reporting and the CLI.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod gradcheck;
pub mod report;

pub use config::{ExperimentConfig, Method, Scenario, Supervision, TeacherConfig};
pub use experiment::{run_cell, run_experiment, train_teacher, ExperimentOutput, Prepared};
pub use gradcheck::{run_gradcheck, GradcheckResult, LossKind};
pub use report::{ResultRow, Summary};
