//! Strict metric suite, operating-point sweeps, ablation grids, the
//! ΔLogit experiment and report writers.

mod ablation;
mod delta_logit;
mod harness;
mod metrics;
mod report;
mod sweep;

pub use ablation::{run_ablations, AblationResult};
pub use delta_logit::{
    delta_logit_experiment, welch_t, DeltaLogitRow, DeltaLogitTable, Direction, TriggerLogitSource,
};
pub use harness::{fnv1a, DecisionSource, Harness, RunSpec};
pub use metrics::{compute_metrics, Counts, Deltas, EvalReport, SampleRow};
pub use report::{
    read_generation_log, report_paths, save_summary_csv, score_generation_log, write_generation_log,
    write_json, write_samples_csv, write_summary_csv, GenerationRecord, SUMMARY_COLUMNS,
};
pub use sweep::{run_sweep, select_cell, SweepCell, SweepGrid, SweepResult, DEFAULT_ALPHAS, DEFAULT_TAUS};
