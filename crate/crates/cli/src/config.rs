//! Experiment configuration: a sectioned `key = value` file.
//!
//! ```text
//! [problem]
//! family = "synthetic"
//!
//! [network]
//! model = "erdos-renyi"
//! m = 10
//! p = 0.7
//! seed = 42
//!
//! [steps]
//! lambda = 20
//! iterations = 200000
//! alpha = 0.0007
//! beta = 0.001
//! gamma = 0.01
//! force = true
//! ```
//!
//! Instead of `alpha`, `beta` and `gamma`, `auto = <safety>` derives them as
//! `safety` times the step-size caps. Values are TOML scalars and arrays.
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use ahead_core::constants::D4Variant;
use ahead_core::solver::InitMode;
use ahead_core::verification::SolveMethod;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// One-dimensional quadratic bilevel problem with per-node coefficients.
    Synthetic,
    /// Regularization hyperparameter tuning for logistic regression.
    Logistic,
    /// Quadratic strongly-convex/strongly-concave saddle problem.
    Minmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub family: Family,

    // synthetic: per-node coefficients, all of length m; defaults to the
    // ten-node reference instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Vec<f64>>,

    // logistic: either a data file or generation parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Partition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_node: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_samples: Option<usize>,
    /// Box for the hyperparameter used to bound the smoothness constants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_box: Option<[f64; 2]>,

    // minmax
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bilinear: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partition {
    RoundRobin,
    Column,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkModel {
    ErdosRenyi,
    Ring,
    Complete,
    Path,
    Star,
    /// Edge list read from `edges`.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub model: NetworkModel,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepsSection {
    pub lambda: f64,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Safety factor in `(0, 1)` applied to the step-size caps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto: Option<f64>,
    /// Run explicit step sizes even when they exceed the caps.
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    #[serde(default, with = "display_fromstr")]
    pub mode: InitMode,
    #[serde(default)]
    pub seed: u64,
}

impl Default for InitSection {
    fn default() -> Self {
        Self { mode: InitMode::Zeros, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogSection {
    /// Defaults to `max(1, K/1000)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSection {
    #[serde(default)]
    pub bounds: bool,
    /// Defaults to 1e-10 for quadratic families and 1e-8 for logistic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_display_fromstr")]
    pub method: Option<SolveMethod>,
    #[serde(default, with = "d4_serde")]
    pub d4: D4Variant,
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn default_slack() -> f64 {
    ahead_core::verification::DEFAULT_SLACK
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub network: NetworkSection,
    pub steps: StepsSection,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub log: LogSection,
    #[serde(default = "default_monitor")]
    pub monitor: MonitorSection,
}

fn default_monitor() -> MonitorSection {
    MonitorSection { slack: default_slack(), ..Default::default() }
}

mod display_fromstr {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use std::fmt::Display;
    use std::str::FromStr;

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

mod opt_display_fromstr {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use std::fmt::Display;
    use std::str::FromStr;

    pub fn serialize<T: Display, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.collect_str(v),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<Option<T>, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map(Some).map_err(D::Error::custom)
    }
}

mod d4_serde {
    use ahead_core::constants::D4Variant;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &D4Variant, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match v {
            D4Variant::Printed => "printed",
            D4Variant::P2 => "p2",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<D4Variant, D::Error> {
        match String::deserialize(d)?.as_str() {
            "printed" => Ok(D4Variant::Printed),
            "p2" => Ok(D4Variant::P2),
            other => Err(D::Error::custom(format!("unknown d4 variant {other:?} (expected printed or p2)"))),
        }
    }
}

/// How the three step sizes are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Explicit { alpha: f64, beta: f64, gamma: f64 },
    Auto { safety: f64 },
}

impl ExperimentConfig {
    /// Parses and validates config text. `origin` is used in error messages and
    /// to resolve relative paths.
    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            line: e.span().map(|s| line_of_offset(text, s.start)),
            msg: e.message().trim().to_string(),
        })?;
        let base = origin.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.apply_defaults();
        cfg.validate().map_err(|(section, key, msg)| CliError::Config {
            path: origin.to_path_buf(),
            line: locate(text, section, key),
            msg: format!("[{section}] {key}: {msg}"),
        })?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn step_rule(&self) -> StepRule {
        let s = &self.steps;
        match (s.auto, s.alpha, s.beta, s.gamma) {
            (Some(safety), ..) => StepRule::Auto { safety },
            (None, Some(alpha), Some(beta), Some(gamma)) => StepRule::Explicit { alpha, beta, gamma },
            _ => unreachable!("validated configuration"),
        }
    }

    /// Logging interval after defaults.
    pub fn log_interval(&self) -> usize {
        self.log.interval.unwrap_or_else(|| default_interval(self.steps.iterations))
    }

    pub fn tol(&self) -> f64 {
        self.monitor.tol.expect("defaults applied")
    }

    pub fn method(&self) -> SolveMethod {
        self.monitor.method.expect("defaults applied")
    }

    /// Replaces every seed with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.network.seed = seed;
        self.init.seed = seed;
        if self.problem.data_seed.is_some() {
            self.problem.data_seed = Some(seed);
        }
        if self.problem.instance_seed.is_some() {
            self.problem.instance_seed = Some(seed);
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        join(&mut self.problem.data);
        join(&mut self.problem.test_data);
        join(&mut self.network.edges);
        join(&mut self.log.dir);
    }

    fn apply_defaults(&mut self) {
        let logistic = self.problem.family == Family::Logistic;
        self.monitor.tol.get_or_insert(if logistic { 1e-8 } else { 1e-10 });
        self.monitor.method.get_or_insert(if logistic { SolveMethod::Newton } else { SolveMethod::Gradient });
        if self.log.interval.is_none() {
            // The recurrence checks need consecutive records.
            let interval = if self.monitor.bounds { 1 } else { default_interval(self.steps.iterations) };
            self.log.interval = Some(interval);
        }
        let p = &mut self.problem;
        match p.family {
            Family::Logistic => {
                p.partition.get_or_insert(Partition::RoundRobin);
                if p.partition == Some(Partition::RoundRobin) {
                    p.val_every.get_or_insert(2);
                }
                if p.data.is_none() {
                    p.data_seed.get_or_insert(0);
                    p.test_samples.get_or_insert(1000);
                }
                let (lo, hi) = ahead_core::problems::DEFAULT_ETA_BOX;
                p.eta_box.get_or_insert([lo, hi]);
            }
            Family::Minmax => {
                if !p.bilinear.unwrap_or(false) {
                    p.instance_seed.get_or_insert(0);
                }
            }
            Family::Synthetic => {}
        }
    }

    /// Returns `(section, key, message)` for the first violated rule.
    fn validate(&self) -> std::result::Result<(), (&'static str, &'static str, String)> {
        let positive = |section, key, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err((section, key, format!("must be positive, got {v}")))
            }
        };
        let s = &self.steps;
        positive("steps", "lambda", s.lambda)?;
        match (s.auto, s.alpha, s.beta, s.gamma) {
            (Some(safety), None, None, None) => {
                if !(safety > 0.0 && safety < 1.0) {
                    return Err(("steps", "auto", format!("safety factor must lie in (0, 1), got {safety}")));
                }
            }
            (Some(_), ..) => {
                return Err(("steps", "auto", "auto step sizes exclude alpha, beta and gamma".into()));
            }
            (None, alpha, beta, gamma) => {
                for (key, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
                    match v {
                        Some(v) => positive("steps", key, v)?,
                        None => {
                            return Err(("steps", key, "missing; give alpha, beta and gamma or auto = <safety>".into()))
                        }
                    }
                }
            }
        }

        let n = &self.network;
        if n.m == 0 {
            return Err(("network", "m", "must be positive".into()));
        }
        match n.model {
            NetworkModel::ErdosRenyi => match n.p {
                Some(p) if p > 0.0 && p <= 1.0 => {}
                Some(p) => return Err(("network", "p", format!("must lie in (0, 1], got {p}"))),
                None => return Err(("network", "p", "required for erdos-renyi".into())),
            },
            NetworkModel::File => match &n.edges {
                Some(path) => existing("network", "edges", path)?,
                None => return Err(("network", "edges", "required for model = \"file\"".into())),
            },
            _ => {
                if n.p.is_some() {
                    return Err(("network", "p", "only used by erdos-renyi".into()));
                }
            }
        }
        if n.model != NetworkModel::File && n.edges.is_some() {
            return Err(("network", "edges", "only used by model = \"file\"".into()));
        }

        match self.log.interval {
            Some(0) => return Err(("log", "interval", "must be at least 1".into())),
            Some(i) if i > 1 && self.monitor.bounds => {
                return Err(("log", "interval", "bound checks need interval = 1".into()))
            }
            _ => {}
        }
        positive("monitor", "tol", self.tol())?;
        if !(self.monitor.slack >= 0.0) {
            return Err(("monitor", "slack", "must be nonnegative".into()));
        }
        self.validate_problem()
    }

    fn validate_problem(&self) -> std::result::Result<(), (&'static str, &'static str, String)> {
        let p = &self.problem;
        let m = self.network.m;
        let unused = |present: bool, key: &'static str| {
            if present {
                Err(("problem", key, format!("not used by family {:?}", family_name(p.family))))
            } else {
                Ok(())
            }
        };
        let coeffs = [("a", &p.a), ("b", &p.b), ("c", &p.c), ("d", &p.d), ("e", &p.e)];
        let logistic_keys = [
            ("data", p.data.is_some()),
            ("test_data", p.test_data.is_some()),
            ("partition", p.partition.is_some()),
            ("val_every", p.val_every.is_some()),
            ("n_features", p.n_features.is_some()),
            ("samples_per_node", p.samples_per_node.is_some()),
            ("separation", p.separation.is_some()),
            ("data_seed", p.data_seed.is_some()),
            ("test_samples", p.test_samples.is_some()),
            ("eta_box", p.eta_box.is_some()),
        ];
        let minmax_keys = [
            ("outer_dim", p.outer_dim.is_some()),
            ("inner_dim", p.inner_dim.is_some()),
            ("instance_seed", p.instance_seed.is_some()),
            ("bilinear", p.bilinear.is_some()),
        ];
        if p.family != Family::Synthetic {
            for (key, v) in coeffs {
                unused(v.is_some(), key)?;
            }
        }
        if p.family != Family::Logistic {
            for (key, present) in logistic_keys {
                unused(present, key)?;
            }
        }
        if p.family != Family::Minmax {
            for (key, present) in minmax_keys {
                unused(present, key)?;
            }
        }
        match p.family {
            Family::Synthetic => {
                let given: Vec<_> = coeffs.iter().filter(|(_, v)| v.is_some()).collect();
                if given.is_empty() {
                    if m != 10 {
                        return Err(("network", "m", format!("the default synthetic instance has 10 nodes, got {m}")));
                    }
                } else if given.len() != 5 {
                    let (key, _) = coeffs.iter().find(|(_, v)| v.is_none()).expect("some coefficient missing");
                    return Err(("problem", key, "give all of a, b, c, d, e or none".into()));
                } else {
                    for (key, v) in coeffs {
                        let len = v.as_ref().map_or(0, Vec::len);
                        if len != m {
                            return Err(("problem", key, format!("has {len} entries but the network has m = {m}")));
                        }
                    }
                }
            }
            Family::Logistic => {
                let generated = [
                    ("n_features", p.n_features.is_some()),
                    ("samples_per_node", p.samples_per_node.is_some()),
                    ("separation", p.separation.is_some()),
                ];
                match &p.data {
                    Some(path) => {
                        existing("problem", "data", path)?;
                        for (key, present) in generated {
                            unused_with_data(present, key)?;
                        }
                        unused_with_data(p.data_seed.is_some(), "data_seed")?;
                        unused_with_data(p.test_samples.is_some(), "test_samples")?;
                    }
                    None => {
                        for (key, present) in generated {
                            if !present {
                                return Err(("problem", key, "required when no data file is given".into()));
                            }
                        }
                        if p.n_features == Some(0) {
                            return Err(("problem", "n_features", "must be positive".into()));
                        }
                        if p.samples_per_node == Some(0) {
                            return Err(("problem", "samples_per_node", "must be positive".into()));
                        }
                        if !(p.separation.unwrap() >= 0.0) {
                            return Err(("problem", "separation", "must be nonnegative".into()));
                        }
                        if p.partition == Some(Partition::Column) {
                            return Err(("problem", "partition", "generated data is partitioned round-robin".into()));
                        }
                    }
                }
                if let Some(path) = &p.test_data {
                    existing("problem", "test_data", path)?;
                }
                match (p.partition, p.val_every) {
                    (Some(Partition::RoundRobin), Some(v)) if v < 2 => {
                        return Err(("problem", "val_every", "must be at least 2".into()))
                    }
                    (Some(Partition::Column), Some(_)) => {
                        return Err(("problem", "val_every", "only used by round-robin partitions".into()))
                    }
                    _ => {}
                }
                if let Some([lo, hi]) = p.eta_box {
                    if !(lo < hi) {
                        return Err(("problem", "eta_box", format!("lower end {lo} must be below upper end {hi}")));
                    }
                }
            }
            Family::Minmax => {
                if p.bilinear == Some(true) {
                    for (key, present) in minmax_keys.iter().filter(|(k, _)| *k != "bilinear") {
                        if *present {
                            return Err(("problem", key, "not used by the bilinear instance".into()));
                        }
                    }
                } else {
                    for key in ["outer_dim", "inner_dim"] {
                        let v = if key == "outer_dim" { p.outer_dim } else { p.inner_dim };
                        match v {
                            Some(0) => return Err(("problem", key, "must be positive".into())),
                            Some(_) => {}
                            None => return Err(("problem", key, "required unless bilinear = true".into())),
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn unused_with_data(present: bool, key: &'static str) -> std::result::Result<(), (&'static str, &'static str, String)> {
    if present {
        Err(("problem", key, "generation parameters cannot be combined with a data file".into()))
    } else {
        Ok(())
    }
}

fn existing(section: &'static str, key: &'static str, path: &Path) -> std::result::Result<(), (&'static str, &'static str, String)> {
    if path.is_file() {
        Ok(())
    } else {
        Err((section, key, format!("file {} does not exist", path.display())))
    }
}

pub fn family_name(f: Family) -> &'static str {
    match f {
        Family::Synthetic => "synthetic",
        Family::Logistic => "logistic",
        Family::Minmax => "minmax",
    }
}

pub fn network_model_name(n: NetworkModel) -> &'static str {
    match n {
        NetworkModel::ErdosRenyi => "erdos-renyi",
        NetworkModel::Ring => "ring",
        NetworkModel::Complete => "complete",
        NetworkModel::Path => "path",
        NetworkModel::Star => "star",
        NetworkModel::File => "file",
    }
}

pub fn default_interval(iterations: usize) -> usize {
    (iterations / 1000).max(1)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    ExperimentConfig::from_text(&text, path)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]`, else the section header, else `None`.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[problem]
family = "synthetic"

[network]
model = "erdos-renyi"
m = 10
p = 0.7
seed = 42

[steps]
lambda = 20
iterations = 1000
alpha = 0.0007
beta = 0.001
gamma = 0.01
"#;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_text(text, Path::new("test.toml"))
    }

    fn config_error(text: &str) -> (Option<usize>, String) {
        match parse(text) {
            Err(CliError::Config { line, msg, .. }) => (line, msg),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_round_trips() {
        let cfg = parse(MINIMAL).unwrap();
        let again = parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.to_text(), again.to_text());
    }

    #[test]
    fn defaults_are_applied_and_echoed() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.log.interval, Some(1));
        assert_eq!(cfg.tol(), 1e-10);
        assert_eq!(cfg.method(), SolveMethod::Gradient);
        assert_eq!(cfg.init.mode, InitMode::Zeros);
        let echo = cfg.to_text();
        assert!(echo.contains("interval = 1"));
        assert!(echo.contains("method = \"gradient\""));
        assert_eq!(cfg.step_rule(), StepRule::Explicit { alpha: 0.0007, beta: 0.001, gamma: 0.01 });
    }

    #[test]
    fn interval_default_scales_with_iterations() {
        assert_eq!(default_interval(0), 1);
        assert_eq!(default_interval(999), 1);
        assert_eq!(default_interval(200_000), 200);
    }

    #[test]
    fn missing_lambda_names_the_key() {
        let text = MINIMAL.replace("lambda = 20\n", "");
        let (line, msg) = config_error(&text);
        assert!(msg.contains("lambda"), "{msg}");
        assert!(line.is_some());
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let text = MINIMAL.replace("seed = 42", "seed = 42\ncolour = \"red\"");
        let (line, msg) = config_error(&text);
        assert!(msg.contains("colour"), "{msg}");
        assert_eq!(line, Some(10));
    }

    #[test]
    fn type_error_reports_its_line() {
        let text = MINIMAL.replace("m = 10", "m = \"ten\"");
        let (line, _) = config_error(&text);
        assert_eq!(line, Some(7));
    }

    #[test]
    fn semantic_error_reports_the_key_line() {
        let text = MINIMAL.replace("p = 0.7", "p = 1.5");
        let (line, msg) = config_error(&text);
        assert_eq!(line, Some(8));
        assert!(msg.contains("[network] p"), "{msg}");
    }

    #[test]
    fn explicit_and_auto_are_exclusive() {
        let text = MINIMAL.replace("gamma = 0.01", "gamma = 0.01\nauto = 0.9");
        let (_, msg) = config_error(&text);
        assert!(msg.contains("auto"), "{msg}");
        let partial = MINIMAL.replace("beta = 0.001\n", "");
        let (_, msg) = config_error(&partial);
        assert!(msg.contains("beta"), "{msg}");
        let auto = MINIMAL.replace("alpha = 0.0007\nbeta = 0.001\ngamma = 0.01", "auto = 0.9");
        assert_eq!(parse(&auto).unwrap().step_rule(), StepRule::Auto { safety: 0.9 });
        let bad = MINIMAL.replace("alpha = 0.0007\nbeta = 0.001\ngamma = 0.01", "auto = 1.0");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn missing_files_are_rejected_at_parse_time() {
        let text = MINIMAL.replace("family = \"synthetic\"", "family = \"logistic\"\ndata = \"no-such-file.csv\"");
        let (line, msg) = config_error(&text);
        assert_eq!(line, Some(4));
        assert!(msg.contains("does not exist"), "{msg}");
    }

    #[test]
    fn coefficient_lengths_must_match_nodes() {
        let text = MINIMAL.replace(
            "family = \"synthetic\"",
            "family = \"synthetic\"\na = [1.0]\nb = [1.0]\nc = [1.0]\nd = [1.0]\ne = [1.0]",
        );
        let (_, msg) = config_error(&text);
        assert!(msg.contains("m = 10"), "{msg}");
    }

    #[test]
    fn seed_override_reaches_every_seed() {
        let mut cfg = parse(MINIMAL).unwrap();
        cfg.override_seed(9);
        assert_eq!((cfg.network.seed, cfg.init.seed), (9, 9));
    }

    #[test]
    fn relative_paths_resolve_against_the_config_directory() {
        let dir = std::env::temp_dir();
        let origin = dir.join("cfg.toml");
        let text = MINIMAL.replace("[steps]", "[log]\ndir = \"out\"\n\n[steps]");
        let cfg = ExperimentConfig::from_text(&text, &origin).unwrap();
        assert_eq!(cfg.log.dir, Some(dir.join("out")));
    }
}
