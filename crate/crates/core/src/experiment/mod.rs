//! Config-driven orchestration: setup, the Thompson-sampling loop,
//! replicates, persistence and charts.

mod checks;
mod config;
mod output;
mod plot;
mod run;

pub use checks::{approx_bound_trials, verify_basis, ApproxTrial, BasisCheck};
pub use config::{apply_override, ExperimentConfig, GridSpec, HypothesisSpec, SCHEMA_VERSION};
pub use output::{diagnostics_csv, emit_plots, read_run, run_csv, write_aggregate, write_run};
pub use plot::{line_chart, Series};
pub use run::{
    replicate_seed, run_experiment, run_replicates, run_with_setup, AggregateReport, BoundSummary, Constants,
    DiagnosticsRow, ReplicateOutcome, RunRecord, RunRow, RunStatus, Setup, Summary, CONVERGED_MASS,
    CONVERGED_R_SQUARED,
};
