//! Configuration, multi-seed experiments and the acceptance suite.

pub mod config;
pub mod experiment;
pub mod verify;

pub use config::{EnvConfig, EnvKind, EtaSetting, Mode, RunConfig};
pub use experiment::{evaluate_checkpoint, oracle_dump, run_experiment, ExperimentSummary};
pub use verify::{run_criterion, run_suite, CriterionReport, Level, SuiteReport};
