//! On-disk run artifacts.
//!
//! A run directory holds:
//!
//! * `config.toml`: the validated configuration with defaults filled in
//! * `header.txt`: `key=value` lines (constants, caps, ρ, step sizes, results),
//!   then the configuration echo after [`CONFIG_MARKER`]
//! * `log.csv`: `#`-prefixed header lines, then one numeric row per logged
//!   iteration with the columns of [`LOG_COLUMNS`]
//! * `snapshots.csv`: network means at every logged iteration
//! * `network.edges`, `mixing.csv`: the graph and its mixing matrix
//! * `bounds.txt`, `bounds.kv`: the bound report, when checks are enabled
//!
//! Floats are written with `{:e}`, which round-trips exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ahead_core::solver::Snapshot;
use ahead_core::verification::{MetricsRecord, OracleFlags, Provenance, LOG_COLUMNS};
use nalgebra::DVector;

use crate::error::{CliError, Result};

pub const LOG_SCHEMA: &str = "ahead-log/1";
pub const CONFIG_MARKER: &str = "# --- config ---";

pub const CONFIG_FILE: &str = "config.toml";
pub const HEADER_FILE: &str = "header.txt";
pub const LOG_FILE: &str = "log.csv";
pub const SNAPSHOT_FILE: &str = "snapshots.csv";
pub const EDGES_FILE: &str = "network.edges";
pub const MIXING_FILE: &str = "mixing.csv";
pub const BOUNDS_TABLE_FILE: &str = "bounds.txt";
pub const BOUNDS_KV_FILE: &str = "bounds.kv";

/// Ordered `key=value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Header {
    entries: Vec<(String, String)>,
}

impl Header {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn push_f64(&mut self, key: impl Into<String>, value: f64) {
        self.push(key, format!("{value:e}"));
    }

    pub fn push_vec(&mut self, key: impl Into<String>, v: &DVector<f64>) {
        self.push(key, join_vec(v));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self, prefix: &str) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            writeln!(out, "{prefix}{k}={v}").unwrap();
        }
        out
    }

    /// Parses `key=value` lines, stopping at [`CONFIG_MARKER`]. A leading `# `
    /// is stripped, so log headers parse too.
    pub fn parse(text: &str) -> Self {
        let mut h = Self::default();
        for line in text.lines() {
            if line == CONFIG_MARKER {
                break;
            }
            let line = line.strip_prefix("# ").unwrap_or(line);
            if let Some((k, v)) = line.split_once('=') {
                h.push(k, v);
            }
        }
        h
    }
}

pub fn join_vec(v: &DVector<f64>) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";")
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(CliError::io(path))
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

pub fn render_header_file(header: &Header, config_echo: &str) -> String {
    format!("{}{CONFIG_MARKER}\n{config_echo}", header.render(""))
}

pub fn render_log(header: &Header, records: &[MetricsRecord]) -> String {
    let mut out = format!("# schema={LOG_SCHEMA}\n# columns={}\n", LOG_COLUMNS.join(","));
    out.push_str(&header.render("# "));
    for r in records {
        let cols = r.columns();
        write!(out, "{}", r.k).unwrap();
        for v in &cols[1..] {
            write!(out, ",{v:e}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// One parsed log row: `k` and the remaining numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub k: usize,
    pub values: [f64; 9],
}

pub fn parse_log(text: &str, path: &Path) -> Result<(Header, Vec<LogRow>)> {
    let bad = |msg: String| CliError::Artifact { path: path.to_path_buf(), msg };
    let header = Header::parse(&text.lines().take_while(|l| l.starts_with('#')).collect::<Vec<_>>().join("\n"));
    match header.get("schema") {
        Some(LOG_SCHEMA) => {}
        other => return Err(bad(format!("unsupported log schema {other:?}, expected {LOG_SCHEMA}"))),
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != LOG_COLUMNS.len() {
            return Err(bad(format!("line {line}: expected {} columns, found {}", LOG_COLUMNS.len(), rec.len())));
        }
        let k = rec[0].parse().map_err(|_| bad(format!("line {line}: invalid iteration {:?}", &rec[0])))?;
        let mut values = [0.0; 9];
        for (slot, field) in values.iter_mut().zip(rec.iter().skip(1)) {
            *slot = field.parse().map_err(|_| bad(format!("line {line}: invalid number {field:?}")))?;
        }
        rows.push(LogRow { k, values });
    }
    Ok((header, rows))
}

pub fn render_snapshots(snapshots: &[Snapshot], records: &[MetricsRecord]) -> String {
    let mut out = String::new();
    let Some(first) = snapshots.first() else {
        return "k,oracle_ok\n".into();
    };
    let mut cols = vec!["k".to_string(), "oracle_ok".to_string()];
    for (name, len) in [("x", first.x_bar.len()), ("y", first.y_bar.len()), ("z", first.z_bar.len()), ("hx", first.hx_bar.len())] {
        cols.extend((1..=len).map(|j| format!("{name}_{j}")));
    }
    out.push_str(&cols.join(","));
    out.push('\n');
    for s in snapshots {
        let ok = records.iter().find(|r| r.k == s.k).is_none_or(|r| r.flags.all_ok());
        write!(out, "{},{}", s.k, u8::from(ok)).unwrap();
        for v in s.x_bar.iter().chain(&s.y_bar).chain(&s.z_bar).chain(&s.hx_bar) {
            write!(out, ",{v:e}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Snapshot row as read back: means and the oracle status flag.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRow {
    pub k: usize,
    pub oracle_ok: bool,
    pub x_bar: DVector<f64>,
    pub y_bar: DVector<f64>,
    pub z_bar: DVector<f64>,
    pub hx_bar: DVector<f64>,
}

pub fn parse_snapshots(text: &str, path: &Path) -> Result<Vec<SnapshotRow>> {
    let bad = |msg: String| CliError::Artifact { path: path.to_path_buf(), msg };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let names: Vec<String> = rdr.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
    let count = |prefix: &str| names.iter().filter(|n| n.starts_with(prefix)).count();
    let (n, r, r_z, n_h) = (count("x_"), count("y_"), count("z_"), count("hx_"));
    if names.len() < 2 || r != r_z || n != n_h || names.len() != 2 + 2 * n + 2 * r {
        return Err(bad(format!("unexpected snapshot columns {names:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| bad(format!("line {line}: invalid value in column {}", names[i])))
        };
        let block = |start: usize, len: usize| -> Result<DVector<f64>> {
            Ok(DVector::from_vec((start..start + len).map(num).collect::<Result<Vec<_>>>()?))
        };
        let k = rec[0].parse().map_err(|_| bad(format!("line {line}: invalid iteration")))?;
        rows.push(SnapshotRow {
            k,
            oracle_ok: &rec[1] == "1",
            x_bar: block(2, n)?,
            y_bar: block(2 + n, r)?,
            z_bar: block(2 + n + r, r)?,
            hx_bar: block(2 + n + 2 * r, n)?,
        });
    }
    Ok(rows)
}

/// Rebuilds metrics records from log rows and the matching snapshots.
pub fn records_from_artifacts(rows: &[LogRow], snapshots: &[SnapshotRow], path: &Path) -> Result<Vec<MetricsRecord>> {
    if rows.len() != snapshots.len() {
        return Err(CliError::Artifact {
            path: path.to_path_buf(),
            msg: format!("{} log rows but {} snapshots", rows.len(), snapshots.len()),
        });
    }
    rows.iter()
        .zip(snapshots)
        .map(|(row, snap)| {
            if row.k != snap.k {
                return Err(CliError::Artifact {
                    path: path.to_path_buf(),
                    msg: format!("log row k = {} does not match snapshot k = {}", row.k, snap.k),
                });
            }
            let v = row.values;
            Ok(MetricsRecord {
                k: row.k,
                phi: v[0],
                grad_phi_sq: v[1],
                grad_approx_sq: v[2],
                inner_err_sq: v[3],
                pen_inner_err_sq: v[4],
                cons_x_sq: v[5],
                cons_y_sq: v[6],
                cons_z_sq: v[7],
                v: v[8],
                hx_bar_sq: snap.hx_bar.norm_squared(),
                flags: OracleFlags {
                    inner_converged: snap.oracle_ok,
                    penalized_converged: snap.oracle_ok,
                    provenance: Provenance::Implicit,
                    hypergradient_failed: !snap.oracle_ok,
                },
            })
        })
        .collect()
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

pub fn in_dir(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(k: usize, x: f64) -> MetricsRecord {
        MetricsRecord {
            k,
            phi: x,
            grad_phi_sq: 0.1 + x,
            grad_approx_sq: 1.0 / 3.0,
            inner_err_sq: 1e-300,
            pen_inner_err_sq: 2.5,
            cons_x_sq: 0.0,
            cons_y_sq: 7.0,
            cons_z_sq: f64::MIN_POSITIVE,
            v: 12345.678,
            hx_bar_sq: 4.0,
            flags: OracleFlags {
                inner_converged: true,
                penalized_converged: true,
                provenance: Provenance::Implicit,
                hypergradient_failed: false,
            },
        }
    }

    #[test]
    fn log_rows_round_trip_exactly() {
        let mut h = Header::default();
        h.push_f64("rho", 0.4375);
        let records = vec![record(0, 0.1), record(1, std::f64::consts::PI)];
        let text = render_log(&h, &records);
        assert!(text.starts_with("# schema=ahead-log/1\n# columns=k,phi,grad_phi_sq"));
        let (header, rows) = parse_log(&text, Path::new("log.csv")).unwrap();
        assert_eq!(header.get("rho"), Some("4.375e-1"));
        assert_eq!(rows.len(), 2);
        for (row, r) in rows.iter().zip(&records) {
            assert_eq!(row.k, r.k);
            assert_eq!(&row.values[..], &r.columns()[1..]);
        }
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let text = "# schema=other/9\n0,1,2,3,4,5,6,7,8,9\n";
        assert!(parse_log(text, Path::new("log.csv")).is_err());
    }

    #[test]
    fn snapshots_and_records_rebuild() {
        let snaps = vec![Snapshot {
            k: 3,
            x_bar: DVector::from_vec(vec![0.25, -1.0]),
            y_bar: DVector::from_vec(vec![0.5]),
            z_bar: DVector::from_vec(vec![0.75]),
            hx_bar: DVector::from_vec(vec![2.0, 0.0]),
            consensus: [0.0; 3],
        }];
        let records = vec![record(3, 0.2)];
        let text = render_snapshots(&snaps, &records);
        let rows = parse_snapshots(&text, Path::new("s.csv")).unwrap();
        assert_eq!(rows[0].x_bar, snaps[0].x_bar);
        assert_eq!(rows[0].hx_bar, snaps[0].hx_bar);
        assert!(rows[0].oracle_ok);
        let log = parse_log(&render_log(&Header::default(), &records), Path::new("l")).unwrap().1;
        let rebuilt = records_from_artifacts(&log, &rows, Path::new("d")).unwrap();
        assert_eq!(rebuilt, records);
    }

    #[test]
    fn header_file_stops_at_config_echo() {
        let mut h = Header::default();
        h.push("steps.alpha", "7e-4");
        let text = render_header_file(&h, "[steps]\nalpha = 1\n");
        let parsed = Header::parse(&text);
        assert_eq!(parsed, h);
    }
}
