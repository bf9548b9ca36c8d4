//! Config-driven experiments: reference and private runs over repeats,
//! attacks, trade-off metrics and result files.

mod config;
mod results;
mod runner;

pub use config::{
    AttackSelection, CsvKind, DatasetSpec, ExperimentConfig, GridPoint, LoadedData, SweepSpec,
};
pub use results::{
    epsilon_label, fmt_num, has_experiment, parse_num, read_results, report_summary, write_results,
    write_roc_file, write_tradeoffs, ResultRow, RESULTS_FILE, RESULT_COLUMNS, TRADEOFF_FILE,
};
pub use runner::{
    persist, repeat_layout, repeat_seed, run_job, sweep, JobOutput, JobTrace, PointOutput,
    SweepOutput,
};
