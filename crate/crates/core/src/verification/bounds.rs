//! Numerical checks of the analysis' inequalities on a logged run.

use std::fmt::Write as _;

use nalgebra::DVector;

use super::metrics::{HeterogeneityEstimate, MetricsRecord};
use super::oracles::{hypergradient_with, inner_solve, penalized_inner_solve_from, penalty_gradient, SolveOptions};
use crate::constants::{error_floors, AnalysisConstants, StepSizes};
use crate::error::{Error, Result};
use crate::problems::{BilevelProblem, SmoothnessInput};

/// Relative slack applied to every right-hand side.
pub const DEFAULT_SLACK: f64 = 1e-6;

/// Outcome of one family of inequality checks.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub name: String,
    pub evaluated: usize,
    pub violations: usize,
    /// Left side at the instance with the largest `lhs / rhs`.
    pub lhs: f64,
    pub rhs: f64,
    /// Reason the check could not run.
    pub skipped: Option<String>,
}

impl BoundCheck {
    fn new(name: &str) -> Self {
        Self { name: name.into(), evaluated: 0, violations: 0, lhs: f64::NAN, rhs: f64::NAN, skipped: None }
    }

    fn skipped(name: &str, why: impl Into<String>) -> Self {
        Self { skipped: Some(why.into()), ..Self::new(name) }
    }

    fn observe(&mut self, lhs: f64, rhs: f64, slack: f64) {
        self.evaluated += 1;
        let ok = lhs <= rhs * (1.0 + slack) || lhs <= rhs;
        if !ok {
            self.violations += 1;
        }
        let ratio = |l: f64, r: f64| if r > 0.0 { l / r } else if l > 0.0 { f64::INFINITY } else { 0.0 };
        let worse = self.evaluated == 1 || !(ratio(lhs, rhs) <= ratio(self.lhs, self.rhs));
        if worse {
            self.lhs = lhs;
            self.rhs = rhs;
        }
    }

    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn passed(&self) -> bool {
        self.skipped.is_none() && self.violations == 0 && self.evaluated > 0
    }

    pub fn status(&self) -> &'static str {
        match (&self.skipped, self.passed()) {
            (Some(_), _) => "skipped",
            (None, true) => "pass",
            (None, false) => "FAIL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundReport {
    pub checks: Vec<BoundCheck>,
}

impl BoundReport {
    pub fn get(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// No executed check has a violation.
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.skipped.is_some() || c.passed())
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<22} {:>9} {:>10} {:>14} {:>14} {:>14}  status",
            "check", "evaluated", "violations", "lhs", "rhs", "margin"
        );
        for c in &self.checks {
            let _ = write!(
                out,
                "{:<22} {:>9} {:>10} {:>14.6e} {:>14.6e} {:>14.6e}  {}",
                c.name,
                c.evaluated,
                c.violations,
                c.lhs,
                c.rhs,
                c.margin(),
                c.status()
            );
            if let Some(why) = &c.skipped {
                let _ = write!(out, " ({why})");
            }
            out.push('\n');
        }
        out
    }

    /// One `name.field=value` line per field.
    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let n = &c.name;
            let _ = writeln!(out, "{n}.evaluated={}", c.evaluated);
            let _ = writeln!(out, "{n}.violations={}", c.violations);
            let _ = writeln!(out, "{n}.lhs={:e}", c.lhs);
            let _ = writeln!(out, "{n}.rhs={:e}", c.rhs);
            let _ = writeln!(out, "{n}.margin={:e}", c.margin());
            let _ = writeln!(out, "{n}.status={}", c.status());
            if let Some(why) = &c.skipped {
                let _ = writeln!(out, "{n}.note={why}");
            }
        }
        out
    }

    /// Inverse of [`BoundReport::render_kv`].
    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut checks: Vec<BoundCheck> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| Error::Data { line: lineno + 1, msg: format!("{msg}: {line:?}") };
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let (name, field) = key.rsplit_once('.').ok_or_else(|| bad("expected name.field"))?;
            if checks.last().is_none_or(|c| c.name != name) {
                checks.push(BoundCheck::new(name));
            }
            let c = checks.last_mut().expect("pushed above");
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad("invalid number"));
            match field {
                "evaluated" => c.evaluated = value.parse().map_err(|_| bad("invalid count"))?,
                "violations" => c.violations = value.parse().map_err(|_| bad("invalid count"))?,
                "lhs" => c.lhs = num(value)?,
                "rhs" => c.rhs = num(value)?,
                "margin" | "status" => {}
                "note" => c.skipped = Some(value.to_string()),
                _ => return Err(bad("unknown field")),
            }
        }
        Ok(Self { checks })
    }
}

/// Inputs shared by every check.
#[derive(Debug, Clone, Copy)]
pub struct CheckContext<'a> {
    pub smoothness: &'a SmoothnessInput,
    pub constants: &'a AnalysisConstants,
    pub steps: &'a StepSizes,
    pub rho: f64,
    pub heterogeneity: &'a HeterogeneityEstimate,
    pub opts: SolveOptions,
    pub slack: f64,
}

pub const CHECK_NAMES: [&str; 10] = [
    "inner_penalty_gap",
    "outer_penalty_gap",
    "grad_approx",
    "inner_tracking",
    "penalized_tracking",
    "consensus_x",
    "consensus_y",
    "consensus_z",
    "averaged_gradient",
    "oracle_flags",
];

/// Runs every check. `x_bars` are the logged outer means used by the penalty
/// gap checks; `records` must be sorted by `k`.
pub fn check_bounds<P: BilevelProblem + ?Sized>(
    problem: &P,
    records: &[MetricsRecord],
    x_bars: &[DVector<f64>],
    ctx: &CheckContext<'_>,
) -> BoundReport {
    let mut checks = penalty_gap_checks(problem, x_bars, ctx).to_vec();
    checks.push(grad_approx_check(records, ctx));
    checks.extend(recurrence_checks(records, ctx));
    checks.push(averaged_gradient(records, ctx));
    let mut flags = BoundCheck::new("oracle_flags");
    for r in records {
        flags.observe(if r.flags.all_ok() { 0.0 } else { 1.0 }, 0.0, 0.0);
    }
    if records.is_empty() {
        flags.skipped = Some("no records".into());
    }
    checks.push(flags);
    BoundReport { checks }
}

/// `‖y*(x) − y*(x;λ)‖² ≤ C_in²/λ²` and `‖∇Φ(x) − ∇p*(x;λ)‖² ≤ C_ou²/λ²`.
pub fn penalty_gap_checks<P: BilevelProblem + ?Sized>(
    problem: &P,
    x_bars: &[DVector<f64>],
    ctx: &CheckContext<'_>,
) -> [BoundCheck; 2] {
    let mut inner = BoundCheck::new("inner_penalty_gap");
    let mut outer = BoundCheck::new("outer_penalty_gap");
    if x_bars.is_empty() {
        return [BoundCheck::skipped("inner_penalty_gap", "no snapshots"), BoundCheck::skipped("outer_penalty_gap", "no snapshots")];
    }
    let lambda = ctx.steps.lambda;
    let c = ctx.constants;
    for x in x_bars {
        let sol = inner_solve(problem, x, &ctx.opts);
        let pen = penalized_inner_solve_from(problem, x, lambda, &sol.y, &ctx.opts);
        inner.observe((&sol.y - &pen.y).norm_squared(), c.c_in * c.c_in / (lambda * lambda), ctx.slack);
        let gp = penalty_gradient(problem, x, lambda, &pen.y, &sol.y);
        match hypergradient_with(problem, x, sol, &ctx.opts) {
            Ok(h) => outer.observe((h.grad - gp).norm_squared(), c.c_ou * c.c_ou / (lambda * lambda), ctx.slack),
            Err(_) => outer.observe(f64::INFINITY, c.c_ou * c.c_ou / (lambda * lambda), ctx.slack),
        }
    }
    [inner, outer]
}

/// Right-hand side of the gradient approximation bound at one record.
pub fn grad_approx_rhs(r: &MetricsRecord, ctx: &CheckContext<'_>) -> f64 {
    let c = ctx.constants;
    let lam = ctx.steps.lambda;
    let lg_sq = ctx.smoothness.l_g1.powi(2);
    2.0 * c.c_ou * c.c_ou / (lam * lam)
        + 12.0 * c.u_lambda_sq * r.pen_inner_err_sq
        + 12.0 * lg_sq * lam * lam * r.inner_err_sq
        + 12.0 * c.u_lambda_sq * r.cons_x_sq
        + 12.0 * c.u_lambda_sq * r.cons_y_sq
        + 12.0 * lg_sq * lam * lam * r.cons_z_sq
}

fn grad_approx_check(records: &[MetricsRecord], ctx: &CheckContext<'_>) -> BoundCheck {
    let mut chk = BoundCheck::new("grad_approx");
    for r in records {
        chk.observe(r.grad_approx_sq, grad_approx_rhs(r, ctx), ctx.slack);
    }
    if records.is_empty() {
        chk.skipped = Some("no records".into());
    }
    chk
}

/// Right-hand sides of the one-step recurrences from `r` to its successor, in
/// the order inner, penalized, consensus x, y, z.
pub fn recurrence_rhs(r: &MetricsRecord, ctx: &CheckContext<'_>) -> [f64; 5] {
    let c = ctx.constants;
    let s = ctx.smoothness;
    let StepSizes { alpha, beta, gamma, lambda, .. } = *ctx.steps;
    let lg_sq = s.l_g1 * s.l_g1;
    let gap = 1.0 - ctx.rho;
    let contraction = 1.0 - gap / 2.0;
    let u_sq = c.u_lambda_sq;
    let (b_f, b_g) = (ctx.heterogeneity.b_f_sq, ctx.heterogeneity.b_g_sq);
    let a_sq = alpha * alpha;
    let lam_sq = lambda * lambda;
    let cin_sq = c.c_in * c.c_in;

    let inner = (1.0 - 2.0 * c.w_gamma * gamma) * r.inner_err_sq
        + 4.0 * lg_sq / c.w_gamma * gamma * (r.cons_x_sq + r.cons_z_sq)
        + 2.0 * c.l_ystar * c.l_ystar / (gamma * c.w_gamma) * a_sq * r.hx_bar_sq;
    let penalized = (1.0 - 2.0 * c.w_beta * beta) * r.pen_inner_err_sq
        + 8.0 * c.l_lambda / c.w_beta * beta * (r.cons_x_sq + r.cons_y_sq)
        + 2.0 * c.l_ystar_lambda * c.l_ystar_lambda / (beta * c.w_beta) * a_sq * r.hx_bar_sq;
    let cx = contraction * r.cons_x_sq
        + 108.0 * a_sq * u_sq / gap * (r.cons_y_sq + r.cons_x_sq)
        + 108.0 * a_sq * lam_sq * lg_sq / gap * r.cons_z_sq
        + 108.0 * a_sq * u_sq / gap * r.pen_inner_err_sq
        + 108.0 * a_sq * cin_sq * u_sq / (gap * lam_sq)
        + 108.0 * a_sq * lam_sq * lg_sq / gap * r.inner_err_sq
        + 6.0 * a_sq * b_f / gap;
    let b_sq = beta * beta;
    let cy = contraction * r.cons_y_sq
        + 72.0 * b_sq * u_sq / gap * (r.cons_x_sq + r.cons_y_sq + r.pen_inner_err_sq)
        + 72.0 * b_sq * cin_sq * u_sq / (gap * lam_sq)
        + 12.0 * b_sq * (b_f + lam_sq * b_g) / gap;
    let g_sq = gamma * gamma;
    let cz = contraction * r.cons_z_sq
        + 24.0 * lg_sq * g_sq / gap * (r.cons_x_sq + r.cons_z_sq + r.inner_err_sq)
        + 6.0 * g_sq * b_g / gap;
    [inner, penalized, cx, cy, cz]
}

fn recurrence_checks(records: &[MetricsRecord], ctx: &CheckContext<'_>) -> [BoundCheck; 5] {
    let names = ["inner_tracking", "penalized_tracking", "consensus_x", "consensus_y", "consensus_z"];
    let mut checks = names.map(BoundCheck::new);
    for pair in records.windows(2) {
        let (r, next) = (&pair[0], &pair[1]);
        if next.k != r.k + 1 {
            continue;
        }
        let rhs = recurrence_rhs(r, ctx);
        let lhs = [next.inner_err_sq, next.pen_inner_err_sq, next.cons_x_sq, next.cons_y_sq, next.cons_z_sq];
        for j in 0..5 {
            checks[j].observe(lhs[j], rhs[j], ctx.slack);
        }
    }
    for c in &mut checks {
        if c.evaluated == 0 {
            c.skipped = Some("no consecutive records (log interval must be 1)".into());
        }
    }
    checks
}

/// `(1/K′) Σ_{k<K′} ‖∇Φ(x̄^k)‖² ≤ (V⁰ − V^{K′−1})/(αK′) + C² + B²` for every prefix.
fn averaged_gradient(records: &[MetricsRecord], ctx: &CheckContext<'_>) -> BoundCheck {
    let mut chk = BoundCheck::new("averaged_gradient");
    let run = records
        .iter()
        .enumerate()
        .take_while(|(j, r)| r.k == records[0].k + j)
        .count();
    if run == 0 || records[0].k != 0 {
        chk.skipped = Some("records must start at k = 0".into());
        return chk;
    }
    let floors = error_floors(
        ctx.steps,
        ctx.constants,
        ctx.smoothness,
        ctx.rho,
        ctx.heterogeneity.b_f_sq,
        ctx.heterogeneity.b_g_sq,
    );
    let v0 = records[0].v;
    let mut sum = 0.0;
    for (j, r) in records[..run].iter().enumerate() {
        sum += r.grad_phi_sq;
        let kp = (j + 1) as f64;
        let rhs = (v0 - r.v) / (ctx.steps.alpha * kp) + floors.total();
        chk.observe(sum / kp, rhs, ctx.slack);
    }
    chk
}
