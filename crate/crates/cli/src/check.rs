//! The `check` command: bound checks recomputed from a run directory.

use std::path::Path;

use ahead_core::verification::{check_bounds, heterogeneity, BoundReport, CheckContext};

use crate::artifacts::{self as art};
use crate::config::parse_config;
use crate::error::Result;
use crate::instance::{build_network, Instance};
use crate::run::{plan, probe_points, write_report, Plan};

/// Reads `config.toml`, `log.csv` and `snapshots.csv` from `dir`, reruns the
/// bound checks with heterogeneity measured at the logged means, and writes
/// `bounds.txt` and `bounds.kv` back into `dir`.
pub fn cmd_check(dir: &Path, slack: Option<f64>) -> Result<BoundReport> {
    let cfg = parse_config(&dir.join(art::CONFIG_FILE))?;
    let instance = Instance::build(&cfg)?;
    let problem = instance.problem();
    let (_, network) = build_network(&cfg)?;
    // The step sizes were already accepted when the run was made.
    let plan = plan(&cfg, problem, network.rho(), true)?;

    let log_path = dir.join(art::LOG_FILE);
    let (_, rows) = art::parse_log(&art::read_file(&log_path)?, &log_path)?;
    let snap_path = dir.join(art::SNAPSHOT_FILE);
    let snapshots = art::parse_snapshots(&art::read_file(&snap_path)?, &snap_path)?;
    let records = art::records_from_artifacts(&rows, &snapshots, dir)?;

    let opts = Plan::solve_options(&cfg);
    let probes = probe_points(snapshots.iter().map(|s| s.x_bar.clone()));
    let het = heterogeneity(problem, &probes, &opts);
    let ctx = CheckContext {
        smoothness: &plan.smoothness,
        constants: &plan.constants,
        steps: &plan.steps,
        rho: plan.rho,
        heterogeneity: &het,
        opts,
        slack: slack.unwrap_or(cfg.monitor.slack),
    };
    let report = check_bounds(problem, &records, &probes, &ctx);
    write_report(dir, &report)?;
    Ok(report)
}
