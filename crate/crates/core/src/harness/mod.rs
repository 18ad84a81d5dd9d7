//! Scenario configuration, batch experiments, the operation-count probe and
//! the gradient check.

mod complexity;
mod config;
mod experiment;
mod gradcheck;

pub use complexity::{
    complexity_probe, predicted_multiply_adds, ComplexityReport, ProbeRow, PROBE_ANTENNAS,
    PROBE_CLUSTERS, PROBE_USERS,
};
pub use config::{load_config, InitKind, ScenarioConfig};
pub use experiment::{
    run_experiment, run_solver, trace_csv, Instance, RunOutcome, RunSummary, SolverKind,
    SummaryRow, Trace,
};
pub use gradcheck::{
    gradcheck_scenario, gradient_check, GradCheckReport, GRADCHECK_EPS, GRADCHECK_TOL,
};
