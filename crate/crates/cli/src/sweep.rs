//! The `sweep` command: one run per value of λ, K or the Erdős–Rényi edge
//! probability, summarized in a table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ahead_core::verification::{inner_solve, penalized_inner_solve};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::artifacts as art;
use crate::config::{default_interval, ExperimentConfig, NetworkModel, StepRule};
use crate::error::{CliError, Result};
use crate::instance::Instance;
use crate::run::{execute, RunOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    Lambda,
    #[value(name = "K", alias = "k")]
    K,
    /// Edge probability of the Erdős–Rényi graph.
    RhoProxy,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Lambda => "lambda",
            Axis::K => "K",
            Axis::RhoProxy => "rho-proxy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Scaling {
    /// Only the swept quantity changes.
    #[default]
    Fixed,
    /// For the K axis: `λ ∝ K^{1/6}`, `α ∝ K^{-2/3}`, `β ∝ K^{-1/2}`,
    /// `γ ∝ K^{-1/3}`, anchored at the base config's K.
    #[value(name = "corollary1")]
    RateScaled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// `ok`, `diverged`, or `error: <message>`.
    pub status: String,
    pub iterations: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub rho: f64,
    pub final_grad_phi_sq: f64,
    pub mean_grad_phi_sq: f64,
    /// `‖y*(0) − y*(0;λ)‖`.
    pub penalty_gap: f64,
    pub c_sq: f64,
    pub b_sq: f64,
}

pub const SUMMARY_COLUMNS: [&str; 13] = [
    "value",
    "status",
    "K",
    "lambda",
    "alpha",
    "beta",
    "gamma",
    "rho",
    "final_grad_phi_sq",
    "mean_grad_phi_sq",
    "penalty_gap",
    "C_sq",
    "B_sq",
];

/// Configuration of the run for one swept value.
pub fn derive_config(base: &ExperimentConfig, axis: Axis, value: f64, scaling: Scaling) -> Result<ExperimentConfig> {
    if !(value.is_finite() && value > 0.0) {
        return Err(CliError::Usage(format!("sweep values must be positive, got {value}")));
    }
    if scaling == Scaling::RateScaled && axis != Axis::K {
        return Err(CliError::Usage("corollary1 scaling applies to the K axis only".into()));
    }
    let mut cfg = base.clone();
    match axis {
        Axis::Lambda => cfg.steps.lambda = value,
        Axis::RhoProxy => {
            if cfg.network.model != NetworkModel::ErdosRenyi {
                return Err(CliError::Usage("the rho-proxy axis needs an erdos-renyi network".into()));
            }
            if value > 1.0 {
                return Err(CliError::Usage(format!("edge probability must lie in (0, 1], got {value}")));
            }
            cfg.network.p = Some(value);
        }
        Axis::K => {
            if value.fract() != 0.0 {
                return Err(CliError::Usage(format!("K values must be integers, got {value}")));
            }
            let k = value as usize;
            cfg.steps.iterations = k;
            if !cfg.monitor.bounds {
                cfg.log.interval = Some(default_interval(k));
            }
            if scaling == Scaling::RateScaled {
                let k0 = base.steps.iterations;
                if k0 == 0 {
                    return Err(CliError::Usage("corollary1 scaling needs a base config with iterations > 0".into()));
                }
                let ratio = value / k0 as f64;
                cfg.steps.lambda = base.steps.lambda * ratio.powf(1.0 / 6.0);
                if let StepRule::Explicit { alpha, beta, gamma } = base.step_rule() {
                    cfg.steps.alpha = Some(alpha * ratio.powf(-2.0 / 3.0));
                    cfg.steps.beta = Some(beta * ratio.powf(-0.5));
                    cfg.steps.gamma = Some(gamma * ratio.powf(-1.0 / 3.0));
                }
            }
        }
    }
    Ok(cfg)
}

/// `‖y*(0) − y*(0;λ)‖` with the config's oracle settings.
pub fn penalty_gap_at_origin(cfg: &ExperimentConfig) -> Result<f64> {
    let instance = Instance::build(cfg)?;
    let p = instance.problem();
    let opts = crate::run::Plan::solve_options(cfg);
    let x = DVector::zeros(p.outer_dim());
    let y = inner_solve(p, &x, &opts);
    let y_pen = penalized_inner_solve(p, &x, cfg.steps.lambda, &opts);
    Ok((y.y - y_pen.y).norm())
}

fn row_for(value: f64, cfg: &ExperimentConfig, outcome: Result<RunOutcome>) -> SweepRow {
    let nan = f64::NAN;
    let mut row = SweepRow {
        value,
        status: String::new(),
        iterations: cfg.steps.iterations,
        lambda: cfg.steps.lambda,
        alpha: nan,
        beta: nan,
        gamma: nan,
        rho: nan,
        final_grad_phi_sq: nan,
        mean_grad_phi_sq: nan,
        penalty_gap: nan,
        c_sq: nan,
        b_sq: nan,
    };
    match outcome.and_then(|o| penalty_gap_at_origin(cfg).map(|gap| (o, gap))) {
        Ok((o, gap)) => {
            row.status = if o.diverged() { "diverged".into() } else { "ok".into() };
            row.alpha = o.plan.steps.alpha;
            row.beta = o.plan.steps.beta;
            row.gamma = o.plan.steps.gamma;
            row.rho = o.plan.rho;
            row.final_grad_phi_sq = o.final_record().map_or(nan, |r| r.grad_phi_sq);
            row.mean_grad_phi_sq = o.mean_grad_phi_sq();
            row.penalty_gap = gap;
            row.c_sq = o.floors.penalty;
            row.b_sq = o.floors.heterogeneity;
        }
        Err(e) => row.status = format!("error: {}", e.to_string().replace([',', '\n'], " ")),
    }
    row
}

/// Runs one experiment per value, concurrently. Per-run failures are recorded
/// in the returned rows and do not stop the sweep. Run artifacts go to
/// `<out_dir>/<axis>-<index>/` and the summary to `<out_dir>/summary.csv`.
pub fn cmd_sweep(
    base: &ExperimentConfig,
    axis: Axis,
    values: &[f64],
    scaling: Scaling,
    out_dir: Option<&Path>,
    force: bool,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(CliError::Usage("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| derive_config(base, axis, v, scaling))
        .collect::<Result<Vec<_>>>()?;
    let dirs: Vec<Option<PathBuf>> =
        (0..values.len()).map(|i| out_dir.map(|d| d.join(format!("{}-{i}", axis.name())))).collect();
    let rows: Vec<SweepRow> = configs
        .par_iter()
        .zip(values.par_iter())
        .zip(dirs.par_iter())
        .map(|((cfg, &v), dir)| row_for(v, cfg, execute(cfg, dir.as_deref(), force)))
        .collect();
    if let Some(dir) = out_dir {
        art::ensure_dir(dir)?;
        art::write_file(&dir.join("summary.csv"), &render_summary_csv(&rows))?;
    }
    Ok(rows)
}

pub fn render_summary_csv(rows: &[SweepRow]) -> String {
    let mut out = SUMMARY_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{:e},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.value,
            r.status,
            r.iterations,
            r.lambda,
            r.alpha,
            r.beta,
            r.gamma,
            r.rho,
            r.final_grad_phi_sq,
            r.mean_grad_phi_sq,
            r.penalty_gap,
            r.c_sq,
            r.b_sq
        )
        .unwrap();
    }
    out
}

pub fn render_summary_table(rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{:>10}  {:<10} {:>8} {:>10} {:>11} {:>11} {:>11} {:>8} {:>13} {:>13} {:>11} {:>11} {:>11}\n",
        "value", "status", "K", "lambda", "alpha", "beta", "gamma", "rho", "final_gphi2", "mean_gphi2", "gap", "C_sq",
        "B_sq"
    );
    for r in rows {
        writeln!(
            out,
            "{:>10.4e}  {:<10} {:>8} {:>10.4} {:>11.4e} {:>11.4e} {:>11.4e} {:>8.4} {:>13.6e} {:>13.6e} {:>11.4e} {:>11.4e} {:>11.4e}",
            r.value,
            r.status,
            r.iterations,
            r.lambda,
            r.alpha,
            r.beta,
            r.gamma,
            r.rho,
            r.final_grad_phi_sq,
            r.mean_grad_phi_sq,
            r.penalty_gap,
            r.c_sq,
            r.b_sq
        )
        .unwrap();
    }
    out
}
