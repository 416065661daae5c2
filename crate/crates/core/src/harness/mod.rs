//! Experiment configuration, seeded runs, validation and CSV output.

pub mod checks;
mod config;
mod experiment;
mod mnist;
mod report;
mod validate;

pub use config::{config_help, DatasetKind, DatasetSpec, LatencySpec, SimConfig, ValidateSpec, KEYS};
pub use experiment::{build_task, run_experiment, run_trials, ExperimentOutput, PAIRED_HEADER, ROUNDS_HEADER, SUMMARY_HEADER};
pub use mnist::{load_idx, parse_idx};
pub use report::{analytic_table, bound_table, latency_table, quadratic_bound_inputs, Row, Table};
pub use validate::{validate, CheckResult, ValidationReport, EXACT_TOL, IDENTITY_TOL, PSI_TOL_HARDCORE, PSI_TOL_PPP};
