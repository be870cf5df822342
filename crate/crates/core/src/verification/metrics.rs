use nalgebra::DVector;

use super::oracles::{
    hypergradient_with, inner_solve, inner_solve_warm, penalized_inner_solve_from, phi_at, Provenance, SolveOptions,
};
use crate::constants::PotentialCoefficients;
use crate::error::Result;
use crate::problems::BilevelProblem;
use crate::solver::{directions, DirectionFields, Monitor, SolverState};

/// Convergence flags of the embedded reference solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleFlags {
    pub inner_converged: bool,
    pub penalized_converged: bool,
    pub provenance: Provenance,
    /// Set when the hypergradient could not be computed; its fields are then NaN.
    pub hypergradient_failed: bool,
}

impl OracleFlags {
    pub fn all_ok(&self) -> bool {
        self.inner_converged && self.penalized_converged && !self.hypergradient_failed
    }
}

/// Diagnostics at one iterate, evaluated at the network means.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub k: usize,
    pub phi: f64,
    pub grad_phi_sq: f64,
    /// `‖∇Φ(x̄) − h̄_x‖²`.
    pub grad_approx_sq: f64,
    /// `‖z̄ − y*(x̄)‖²`.
    pub inner_err_sq: f64,
    /// `‖ȳ − y*(x̄; λ)‖²`.
    pub pen_inner_err_sq: f64,
    pub cons_x_sq: f64,
    pub cons_y_sq: f64,
    pub cons_z_sq: f64,
    pub v: f64,
    /// `‖h̄_x‖²`, needed by the tracking recurrences.
    pub hx_bar_sq: f64,
    pub flags: OracleFlags,
}

/// Column order of the per-iteration log.
pub const LOG_COLUMNS: [&str; 10] = [
    "k",
    "phi",
    "grad_phi_sq",
    "grad_approx_sq",
    "inner_err_sq",
    "pen_inner_err_sq",
    "cons_x_sq",
    "cons_y_sq",
    "cons_z_sq",
    "V",
];

impl MetricsRecord {
    /// Values in [`LOG_COLUMNS`] order, with `k` as a float.
    pub fn columns(&self) -> [f64; 10] {
        [
            self.k as f64,
            self.phi,
            self.grad_phi_sq,
            self.grad_approx_sq,
            self.inner_err_sq,
            self.pen_inner_err_sq,
            self.cons_x_sq,
            self.cons_y_sq,
            self.cons_z_sq,
            self.v,
        ]
    }
}

/// Everything [`metrics`] needs besides the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsContext {
    pub lambda: f64,
    pub coefficients: PotentialCoefficients,
    pub opts: SolveOptions,
}

/// Metrics at `state` given its directions. Warm starts, if present, seed the
/// iterative solves.
pub fn metrics_with<P: BilevelProblem + ?Sized>(
    problem: &P,
    state: &SolverState,
    dirs: &DirectionFields,
    ctx: &MetricsContext,
    warm_inner: Option<&DVector<f64>>,
    warm_pen: Option<&DVector<f64>>,
) -> (MetricsRecord, DVector<f64>, DVector<f64>) {
    let x_bar = state.x_bar();
    let y_bar = state.y_bar();
    let z_bar = state.z_bar();
    let hx_bar = dirs.hx_bar();
    let inner = match warm_inner {
        Some(w) => inner_solve_warm(problem, &x_bar, w, &ctx.opts),
        None => inner_solve(problem, &x_bar, &ctx.opts),
    };
    let pen_start = warm_pen.unwrap_or(&inner.y).clone();
    let pen = penalized_inner_solve_from(problem, &x_bar, ctx.lambda, &pen_start, &ctx.opts);
    let y_star = inner.y.clone();
    let inner_converged = inner.converged;
    let phi = phi_at(problem, &x_bar, &y_star);
    let (grad_phi_sq, grad_approx_sq, provenance, failed) = match hypergradient_with(problem, &x_bar, inner, &ctx.opts) {
        Ok(h) => (h.grad.norm_squared(), (&h.grad - &hx_bar).norm_squared(), h.provenance, false),
        Err(_) => (f64::NAN, f64::NAN, Provenance::FiniteDifference, true),
    };
    let inner_err_sq = (&z_bar - &y_star).norm_squared();
    let pen_inner_err_sq = (&y_bar - &pen.y).norm_squared();
    let cons = state.consensus_errors();
    let v = ctx.coefficients.evaluate(phi, pen_inner_err_sq, inner_err_sq, cons);
    let record = MetricsRecord {
        k: state.k,
        phi,
        grad_phi_sq,
        grad_approx_sq,
        inner_err_sq,
        pen_inner_err_sq,
        cons_x_sq: cons[0],
        cons_y_sq: cons[1],
        cons_z_sq: cons[2],
        v,
        hx_bar_sq: hx_bar.norm_squared(),
        flags: OracleFlags {
            inner_converged,
            penalized_converged: pen.converged,
            provenance,
            hypergradient_failed: failed,
        },
    };
    (record, y_star, pen.y)
}

/// Metrics at `state`, computing the directions and cold-starting every solve.
pub fn metrics<P: BilevelProblem + ?Sized>(problem: &P, state: &SolverState, ctx: &MetricsContext) -> Result<MetricsRecord> {
    let dirs = directions(problem, state, ctx.lambda)?;
    Ok(metrics_with(problem, state, &dirs, ctx, None, None).0)
}

/// Solver monitor producing a [`MetricsRecord`] per logged iterate.
///
/// It evaluates oracles on its own problem handle, so a counting wrapper passed
/// to the solver only sees the solver's calls.
pub struct MetricsMonitor<'a, P: ?Sized> {
    problem: &'a P,
    ctx: MetricsContext,
    warm_inner: Option<DVector<f64>>,
    warm_pen: Option<DVector<f64>>,
}

impl<'a, P: BilevelProblem + ?Sized> MetricsMonitor<'a, P> {
    pub fn new(problem: &'a P, ctx: MetricsContext) -> Self {
        Self { problem, ctx, warm_inner: None, warm_pen: None }
    }
}

impl<P: BilevelProblem + ?Sized> Monitor for MetricsMonitor<'_, P> {
    type Record = MetricsRecord;
    fn observe(&mut self, state: &SolverState, dirs: &DirectionFields) -> MetricsRecord {
        let (rec, y_star, y_pen) =
            metrics_with(self.problem, state, dirs, &self.ctx, self.warm_inner.as_ref(), self.warm_pen.as_ref());
        if rec.flags.inner_converged {
            self.warm_inner = Some(y_star);
        }
        if rec.flags.penalized_converged {
            self.warm_pen = Some(y_pen);
        }
        rec
    }
}

/// Running suprema of the gradient heterogeneity at `(x, y*(x))`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeterogeneityEstimate {
    pub b_f_sq: f64,
    pub b_g_sq: f64,
    pub probe_count: usize,
    /// Probes whose inner solve did not reach the tolerance.
    pub unconverged: usize,
}

impl HeterogeneityEstimate {
    /// Adds one probe point.
    pub fn probe<P: BilevelProblem + ?Sized>(&mut self, problem: &P, x: &DVector<f64>, opts: &SolveOptions) {
        let sol = inner_solve(problem, x, opts);
        if !sol.converged {
            self.unconverged += 1;
        }
        let (bf, bg) = heterogeneity_at(problem, x, &sol.y);
        self.b_f_sq = self.b_f_sq.max(bf);
        self.b_g_sq = self.b_g_sq.max(bg);
        self.probe_count += 1;
    }
}

/// `(1/m) Σ ‖∇h_i − ∇h‖²` over both partial blocks, for `h = f` and `h = g`.
pub fn heterogeneity_at<P: BilevelProblem + ?Sized>(problem: &P, x: &DVector<f64>, y: &DVector<f64>) -> (f64, f64) {
    let m = problem.nodes();
    let spread = |grads: Vec<crate::problems::PartialGrad>| {
        let mx = grads.iter().fold(DVector::zeros(x.len()), |a, g| a + &g.x) / m as f64;
        let my = grads.iter().fold(DVector::zeros(y.len()), |a, g| a + &g.y) / m as f64;
        grads.iter().map(|g| (&g.x - &mx).norm_squared() + (&g.y - &my).norm_squared()).sum::<f64>() / m as f64
    };
    let f = spread((0..m).map(|i| problem.outer_grad(i, x, y)).collect());
    let g = spread((0..m).map(|i| problem.inner_grad(i, x, y)).collect());
    (f, g)
}

pub fn heterogeneity<P: BilevelProblem + ?Sized>(
    problem: &P,
    probes: &[DVector<f64>],
    opts: &SolveOptions,
) -> HeterogeneityEstimate {
    let mut est = HeterogeneityEstimate::default();
    for x in probes {
        est.probe(problem, x, opts);
    }
    est
}
