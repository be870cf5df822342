//! Reference oracles, per-iteration diagnostics and bound checks.
//!
//! Everything here may use second-order information and nested solves; none
//! of it is called by the solver itself.

mod bounds;
mod metrics;
mod oracles;

pub use bounds::{
    check_bounds, grad_approx_rhs, penalty_gap_checks, recurrence_rhs, BoundCheck, BoundReport, CheckContext, CHECK_NAMES,
    DEFAULT_SLACK,
};
pub use metrics::{
    heterogeneity, heterogeneity_at, metrics, metrics_with, HeterogeneityEstimate, MetricsContext, MetricsMonitor,
    MetricsRecord, OracleFlags, LOG_COLUMNS,
};
pub use oracles::{
    finite_diff_hypergradient, hypergradient, hypergradient_with, inner_solve, inner_solve_from, inner_solve_warm,
    penalized_inner_solve, penalized_inner_solve_from, penalty_gradient, phi, phi_at, Hypergradient, InnerSolution,
    Provenance, SolveMethod, SolveOptions,
};
