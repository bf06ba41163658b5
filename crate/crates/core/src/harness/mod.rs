//! Experiment orchestration: configs, per-seed runs, sweeps, reports and
//! comparison tables.

mod config;
mod report;
mod run;
mod sweep;

pub use config::{parse_config, DatasetSource, ExperimentConfig, Overrides};
pub use report::{compare, load_records, report, summarize, CompareRow, ComparisonTable, Ranks, Report, StrategySummary};
pub use run::{run_experiment, run_experiment_in_memory, run_seed, ExperimentOutcome, RunFailure, RunRecord};
pub use sweep::{sweep, SweepGrid, SweepOutcome, SweepRow};
