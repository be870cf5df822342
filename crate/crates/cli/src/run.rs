//! The `run` command: one experiment, its metrics log and optional bound checks.

use std::path::Path;

use ahead_core::constants::{
    derive_constants, error_floors, potential_coefficients, stepsize_caps, within_caps, AnalysisConstants,
    ErrorFloors, PotentialCoefficients, StepCaps, StepSizes,
};
use ahead_core::network::MixingMatrix;
use ahead_core::problems::{BilevelProblem, Counted, OracleCounts, SmoothnessInput};
use ahead_core::solver::{init_state, run, RunOptions, Snapshot, SolverState, Termination};
use ahead_core::verification::{
    check_bounds, heterogeneity, BoundReport, CheckContext, HeterogeneityEstimate, MetricsContext, MetricsMonitor,
    MetricsRecord, SolveOptions,
};
use nalgebra::DVector;

use crate::artifacts::{self as art, Header};
use crate::config::{family_name, network_model_name, ExperimentConfig, StepRule};
use crate::error::{CliError, Result};
use crate::instance::{build_network, Instance};

/// Step sizes with the analysis quantities they were checked against.
#[derive(Debug, Clone, Copy)]
pub struct Plan {
    pub smoothness: SmoothnessInput,
    pub constants: AnalysisConstants,
    pub caps: StepCaps,
    pub steps: StepSizes,
    pub rho: f64,
    pub within_caps: bool,
    pub coefficients: PotentialCoefficients,
}

/// Resolves the step-size rule. Explicit step sizes above the caps are an
/// error unless `force` is set in the config or passed here.
pub fn plan(cfg: &ExperimentConfig, problem: &dyn BilevelProblem, rho: f64, force: bool) -> Result<Plan> {
    let smoothness = problem.smoothness();
    let lambda = cfg.steps.lambda;
    let constants = derive_constants(&smoothness, lambda)?;
    let caps = stepsize_caps(&constants, &smoothness, rho, lambda)?;
    let (alpha, beta, gamma) = match cfg.step_rule() {
        StepRule::Explicit { alpha, beta, gamma } => (alpha, beta, gamma),
        StepRule::Auto { safety } => (safety * caps.alpha, safety * caps.beta, safety * caps.gamma),
    };
    let steps = StepSizes { alpha, beta, gamma, lambda, iterations: cfg.steps.iterations };
    steps.validate()?;
    let ok = within_caps(&steps, &constants, &smoothness, rho);
    if !ok && !(force || cfg.steps.force) {
        return Err(CliError::Usage(format!(
            "step sizes (alpha={alpha:e}, beta={beta:e}, gamma={gamma:e}) exceed the caps \
             (alpha<={:e}, beta<={:e}, gamma<={:e}); set force = true under [steps] or pass --force",
            caps.alpha, caps.beta, caps.gamma
        )));
    }
    let coefficients = potential_coefficients(&steps, &constants, &smoothness, rho, cfg.monitor.d4);
    Ok(Plan { smoothness, constants, caps, steps, rho, within_caps: ok, coefficients })
}

impl Plan {
    pub fn solve_options(cfg: &ExperimentConfig) -> SolveOptions {
        let mut opts = match cfg.method() {
            ahead_core::verification::SolveMethod::Gradient => SolveOptions::gradient(cfg.tol()),
            ahead_core::verification::SolveMethod::Newton => SolveOptions::newton(cfg.tol()),
        };
        opts.tol = cfg.tol();
        opts
    }

    pub fn metrics_context(&self, cfg: &ExperimentConfig) -> MetricsContext {
        MetricsContext { lambda: self.steps.lambda, coefficients: self.coefficients, opts: Self::solve_options(cfg) }
    }

    pub fn floors(&self, het: &HeterogeneityEstimate) -> ErrorFloors {
        error_floors(&self.steps, &self.constants, &self.smoothness, self.rho, het.b_f_sq, het.b_g_sq)
    }

    fn describe(&self, cfg: &ExperimentConfig, problem: &dyn BilevelProblem, h: &mut Header) {
        h.push("family", family_name(cfg.problem.family));
        h.push("nodes", problem.nodes());
        h.push("outer_dim", problem.outer_dim());
        h.push("inner_dim", problem.inner_dim());
        h.push("network.model", network_model_name(cfg.network.model));
        h.push("network.seed", cfg.network.seed);
        h.push_f64("rho", self.rho);
        let s = &self.smoothness;
        for (k, v) in [("mu_g", s.mu_g), ("L_f1", s.l_f1), ("L_g1", s.l_g1), ("L_g2", s.l_g2), ("C_fy", s.c_fy)] {
            h.push_f64(format!("smoothness.{k}"), v);
        }
        let c = &self.constants;
        for (k, v) in [
            ("kappa", c.kappa),
            ("L", c.l),
            ("L_ystar", c.l_ystar),
            ("C_in", c.c_in),
            ("C_ou", c.c_ou),
            ("mu_lambda", c.mu_lambda),
            ("L_lambda", c.l_lambda),
            ("L_ystar_lambda", c.l_ystar_lambda),
            ("U_lambda_sq", c.u_lambda_sq),
            ("w_gamma", c.w_gamma),
            ("w_beta", c.w_beta),
            ("U_beta", c.u_beta),
            ("p1", c.p1),
            ("p2", c.p2),
            ("p3", c.p3),
        ] {
            h.push_f64(format!("constants.{k}"), v);
        }
        h.push("constants.below_penalty_threshold", c.below_penalty_threshold);
        h.push_f64("caps.alpha", self.caps.alpha);
        h.push_f64("caps.beta", self.caps.beta);
        h.push_f64("caps.gamma", self.caps.gamma);
        match cfg.step_rule() {
            StepRule::Explicit { .. } => h.push("steps.rule", "explicit"),
            StepRule::Auto { safety } => {
                h.push("steps.rule", "auto");
                h.push_f64("steps.safety", safety);
            }
        }
        h.push_f64("steps.alpha", self.steps.alpha);
        h.push_f64("steps.beta", self.steps.beta);
        h.push_f64("steps.gamma", self.steps.gamma);
        h.push_f64("steps.lambda", self.steps.lambda);
        h.push("steps.iterations", self.steps.iterations);
        h.push("steps.within_caps", self.within_caps);
        for (j, d) in self.coefficients.d.iter().enumerate() {
            h.push_f64(format!("potential.d{j}"), *d);
        }
        h.push("init.mode", cfg.init.mode);
        h.push("init.seed", cfg.init.seed);
        h.push("log.interval", cfg.log_interval());
        h.push_f64("oracle.tol", cfg.tol());
        h.push("oracle.method", cfg.method());
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub plan: Plan,
    pub records: Vec<MetricsRecord>,
    pub snapshots: Vec<Snapshot>,
    pub termination: Termination,
    pub final_state: SolverState,
    pub heterogeneity: HeterogeneityEstimate,
    pub floors: ErrorFloors,
    pub report: Option<BoundReport>,
    /// Oracle calls made by the solver itself (metrics excluded).
    pub solver_counts: OracleCounts,
    pub test_accuracy: Option<f64>,
    pub header: Header,
}

impl RunOutcome {
    pub fn diverged(&self) -> bool {
        matches!(self.termination, Termination::Diverged { .. })
    }

    pub fn mean_grad_phi_sq(&self) -> f64 {
        self.records.iter().map(|r| r.grad_phi_sq).sum::<f64>() / self.records.len().max(1) as f64
    }

    pub fn final_record(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }
}

/// Finite logged means, used as heterogeneity probes.
pub fn probe_points(snapshots: impl IntoIterator<Item = DVector<f64>>) -> Vec<DVector<f64>> {
    snapshots.into_iter().filter(|x| x.iter().all(|v| v.is_finite())).collect()
}

/// Runs one experiment. Artifacts are written to `out_dir` when given; the
/// configuration and network files are written before the solver starts so a
/// diverged run still leaves them behind.
pub fn execute(cfg: &ExperimentConfig, out_dir: Option<&Path>, force: bool) -> Result<RunOutcome> {
    let instance = Instance::build(cfg)?;
    let problem = instance.problem();
    let (graph, network) = build_network(cfg)?;
    let plan = plan(cfg, problem, network.rho(), force)?;

    if let Some(dir) = out_dir {
        art::ensure_dir(dir)?;
        art::write_file(&dir.join(art::CONFIG_FILE), &cfg.to_text())?;
        let mut edges = Vec::new();
        graph.write_edge_list(&mut edges)?;
        art::write_file(&dir.join(art::EDGES_FILE), &String::from_utf8_lossy(&edges))?;
        let mut mixing = Vec::new();
        network.write_csv(&mut mixing)?;
        art::write_file(&dir.join(art::MIXING_FILE), &String::from_utf8_lossy(&mixing))?;
    }

    let outcome = solve(cfg, &instance, &network, plan)?;

    if let Some(dir) = out_dir {
        write_outcome(dir, cfg, &outcome)?;
    }
    Ok(outcome)
}

fn solve(cfg: &ExperimentConfig, instance: &Instance, network: &MixingMatrix, plan: Plan) -> Result<RunOutcome> {
    let problem = instance.problem();
    let counted = Counted::new(problem);
    let init = init_state(problem, network, cfg.init.mode, cfg.init.seed)?;
    let mut monitor = MetricsMonitor::new(problem, plan.metrics_context(cfg));
    let opts = RunOptions { log_every: cfg.log_interval(), snapshots: true };
    let log = run(&counted, network, &plan.steps, init, opts, &mut monitor)?;
    let solver_counts = counted.counts();

    let solve_opts = Plan::solve_options(cfg);
    let probes = probe_points(log.snapshots.iter().map(|s| s.x_bar.clone()));
    let het = heterogeneity(problem, &probes, &solve_opts);
    let floors = plan.floors(&het);

    let report = cfg.monitor.bounds.then(|| {
        let ctx = CheckContext {
            smoothness: &plan.smoothness,
            constants: &plan.constants,
            steps: &plan.steps,
            rho: plan.rho,
            heterogeneity: &het,
            opts: solve_opts,
            slack: cfg.monitor.slack,
        };
        check_bounds(problem, &log.records, &probes, &ctx)
    });

    let z_bar = log.final_state.z_bar();
    let test_accuracy = instance.test_accuracy(&z_bar);

    let mut header = Header::default();
    plan.describe(cfg, problem, &mut header);
    match log.termination {
        Termination::Completed => header.push("termination", "completed"),
        Termination::Diverged { k, max_abs } => {
            header.push("termination", "diverged");
            header.push("diverged.k", k);
            header.push_f64("diverged.max_abs", max_abs);
        }
    }
    header.push("solver.value_calls", solver_counts.values);
    header.push("solver.gradient_calls", solver_counts.gradients);
    header.push("solver.second_order_calls", solver_counts.second_order);
    header.push_f64("heterogeneity.b_f_sq", het.b_f_sq);
    header.push_f64("heterogeneity.b_g_sq", het.b_g_sq);
    header.push("heterogeneity.probes", het.probe_count);
    header.push("heterogeneity.unconverged", het.unconverged);
    header.push_f64("floors.C_sq", floors.penalty);
    header.push_f64("floors.B_sq", floors.heterogeneity);
    header.push("result.final_k", log.final_state.k);
    header.push_vec("result.x_bar", &log.final_state.x_bar());
    header.push_vec("result.y_bar", &log.final_state.y_bar());
    header.push_vec("result.z_bar", &z_bar);
    if let Some(acc) = test_accuracy {
        header.push_f64("result.test_accuracy", acc);
    }
    if let Some(r) = &report {
        header.push("bounds.all_passed", r.all_passed());
    }

    Ok(RunOutcome {
        plan,
        records: log.records,
        snapshots: log.snapshots,
        termination: log.termination,
        final_state: log.final_state,
        heterogeneity: het,
        floors,
        report,
        solver_counts,
        test_accuracy,
        header,
    })
}

fn write_outcome(dir: &Path, cfg: &ExperimentConfig, o: &RunOutcome) -> Result<()> {
    art::write_file(&dir.join(art::HEADER_FILE), &art::render_header_file(&o.header, &cfg.to_text()))?;
    art::write_file(&dir.join(art::LOG_FILE), &art::render_log(&o.header, &o.records))?;
    art::write_file(&dir.join(art::SNAPSHOT_FILE), &art::render_snapshots(&o.snapshots, &o.records))?;
    if let Some(report) = &o.report {
        write_report(dir, report)?;
    }
    Ok(())
}

pub fn write_report(dir: &Path, report: &BoundReport) -> Result<()> {
    art::write_file(&dir.join(art::BOUNDS_TABLE_FILE), &report.render_table())?;
    art::write_file(&dir.join(art::BOUNDS_KV_FILE), &report.render_kv())
}

/// Short human-readable summary printed by the CLI.
pub fn summary(o: &RunOutcome) -> String {
    let mut lines = vec![format!(
        "rho={:.6} alpha={:e} beta={:e} gamma={:e} lambda={} K={} within_caps={}",
        o.plan.rho, o.plan.steps.alpha, o.plan.steps.beta, o.plan.steps.gamma, o.plan.steps.lambda,
        o.plan.steps.iterations, o.plan.within_caps
    )];
    if let Some(r) = o.final_record() {
        lines.push(format!(
            "k={} phi={:e} grad_phi_sq={:e} inner_err_sq={:e} consensus=({:e}, {:e}, {:e})",
            r.k, r.phi, r.grad_phi_sq, r.inner_err_sq, r.cons_x_sq, r.cons_y_sq, r.cons_z_sq
        ));
    }
    lines.push(format!("x_bar={}", art::join_vec(&o.final_state.x_bar())));
    if let Some(acc) = o.test_accuracy {
        lines.push(format!("test_accuracy={acc:.4}"));
    }
    lines.push(format!("C_sq={:e} B_sq={:e}", o.floors.penalty, o.floors.heterogeneity));
    if let Termination::Diverged { k, max_abs } = o.termination {
        lines.push(format!("diverged at k={k} (max |entry| = {max_abs:e})"));
    }
    lines.join("\n")
}
