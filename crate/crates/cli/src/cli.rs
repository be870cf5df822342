//! Argument parsing and dispatch for the `ahead` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::check::cmd_check;
use crate::config::{parse_config, ExperimentConfig};
use crate::error::Result;
use crate::gen_data::{cmd_gen_data, GenDataRequest};
use crate::run::{execute, summary};
use crate::sweep::{cmd_sweep, render_summary_table, Axis, Scaling};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "AHEAD_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "ahead-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "ahead", version, about = "Distributed bilevel optimization simulator with bound verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config file.
    pub config: PathBuf,
    /// Output directory. Falls back to `[log] dir`, then $AHEAD_OUT_DIR, then ./ahead-out.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run explicit step sizes that exceed the caps.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write its log.
    Run(RunArgs),
    /// Run one experiment per value of an axis and summarize.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Scaling::Fixed)]
        scaling: Scaling,
    },
    /// Recompute the bound checks of an existing run directory.
    Check {
        dir: PathBuf,
        /// Override the relative slack of every check.
        #[arg(long)]
        slack: Option<f64>,
    },
    /// Generate a two-cluster classification dataset.
    GenData {
        #[arg(long)]
        n_features: usize,
        #[arg(long)]
        samples_per_node: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        test_samples: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        test_out: Option<PathBuf>,
    },
}

/// `--out`, then the config's `[log] dir`, then `$AHEAD_OUT_DIR`, then the default.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.log.dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn load(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    let out = resolve_out_dir(args.out.as_deref(), &cfg);
    Ok((cfg, out))
}

/// Executes a parsed command, printing to `out`, and returns the exit status.
pub fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Run(args) => {
            let (cfg, dir) = load(&args)?;
            let outcome = execute(&cfg, Some(&dir), args.force)?;
            writeln!(out, "{}", summary(&outcome)).ok();
            if let Some(report) = &outcome.report {
                write!(out, "{}", report.render_table()).ok();
            }
            writeln!(out, "artifacts in {}", dir.display()).ok();
            Ok(if outcome.diverged() { EXIT_DIVERGED } else { EXIT_OK })
        }
        Command::Sweep { run, axis, values, scaling } => {
            let (cfg, dir) = load(&run)?;
            let rows = cmd_sweep(&cfg, axis, &values, scaling, Some(&dir), run.force)?;
            write!(out, "{}", render_summary_table(&rows)).ok();
            writeln!(out, "summary in {}", dir.join("summary.csv").display()).ok();
            Ok(if rows.iter().all(|r| r.status == "ok") { EXIT_OK } else { EXIT_ERROR })
        }
        Command::Check { dir, slack } => {
            let report = cmd_check(&dir, slack)?;
            write!(out, "{}", report.render_table()).ok();
            Ok(if report.all_passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::GenData { n_features, samples_per_node, m, separation, seed, test_samples, out: path, test_out } => {
            let req = GenDataRequest { n_features, samples_per_node, m, separation, seed, test_samples, out: path, test_out };
            for p in cmd_gen_data(&req)? {
                writeln!(out, "wrote {}", p.display()).ok();
            }
            Ok(EXIT_OK)
        }
    }
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    match dispatch(cli, &mut stdout.lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
