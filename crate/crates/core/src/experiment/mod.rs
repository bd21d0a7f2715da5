//! Config-driven experiments: single runs, sweeps, reports and resource
//! accounting.

mod config;
mod report;
mod resources;
mod run;
mod sweep;

pub use config::{apply_override, DatasetConfig, ExperimentConfig, UpdateScheme};
pub use report::{
    cmd_report, collect_summaries, format_steps, speedup_cell, speedup_table, ReportRow,
    SpeedupTable,
};
pub use resources::{report_resources, ResourceReport};
pub use run::{
    cmd_run, memory_model, prepare, resolve_out_dir, run_repeat, trace_file_name, trace_metrics,
    Prepared, RunOutput, RunSeeds, RunSummary, Speedup, SummaryReport, TraceMetrics,
};
pub use sweep::{cmd_sweep, SweepAxis, SweepFailure, SweepResult, SweepRow};
