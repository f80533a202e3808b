//! Experiment configuration, drivers and report emission.

mod config;
mod report;
mod runs;

pub use config::{parse_config, ExperimentConfig, ExperimentKind, InitialData, PathSpec, Scheme};
pub use report::{emit_report, Comparison, ExperimentReport, Provenance, Series, Verdict};
pub use runs::{
    run_cocycle, run_contraction, run_convergence, run_diagnose, run_experiment, run_positivity, run_solve,
    run_solve_with_trajectory,
};
