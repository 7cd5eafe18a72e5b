//! Scenario files, the end-to-end closed loop, parameter sweeps, randomized
//! check suites and CSV/text report emission.

mod check;
mod report;
mod run;
mod scenario;
mod sweep;

pub use check::{random_scenario, run_check_suite, CheckOutcome, CheckSuiteConfig, CheckSummary};
pub use report::{emit_report, ReportPaths};
pub use run::{
    disturbance_digest, replay_auxiliary, run_scenario, sample_disturbances, EquivalenceReport, RunRecord, RunStatus,
    SolverSummary,
};
pub use scenario::{DeviationMetric, PlantKind, PlantSpec, Scenario, SCHEMA_VERSION};
pub use sweep::{linear_fit, sweep_tau_max, LinearFit, SweepRow};
