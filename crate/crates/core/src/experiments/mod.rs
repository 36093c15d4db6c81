//! Batch runs of simulated-oracle conditions, parameter sweeps and the
//! statistics reported alongside them.
//!
//! Welfare is the terminal potential divided by the number of agents.

mod condition;
mod manifest;
mod stats;
mod sweep;

pub use condition::{
    run_condition, Condition, ConditionKind, ConditionResult, EpisodeSummary, InitialRule, RunOptions,
    BOOTSTRAP_ITERATIONS, CI_LEVEL, DEFAULT_CONSISTENCY_QUERIES, DEFAULT_CONSISTENCY_REPEATS,
};
pub use manifest::{run_manifest, write_atomic, write_results_csv, Manifest, ManifestOutcome, SweepSpec, RESULTS_COLUMNS};
pub use stats::{
    binomial_se, bonferroni, bootstrap_ci, mean_sd, wilcoxon_signed_rank, WilcoxonResult, BONFERRONI_ALPHA,
    WILCOXON_MIN_PAIRS,
};
pub use sweep::{cell, sweep, write_sweep_csv, SweepAxis, SweepRow, SWEEP_COLUMNS, SWEEP_DELTA_MAX_SIZE};
