//! The `gen-data` command.

use std::path::{Path, PathBuf};

use ahead_core::problems::{generate_dataset, Dataset, Sample};

use crate::artifacts::write_file;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GenDataRequest {
    pub n_features: usize,
    pub samples_per_node: usize,
    pub m: usize,
    pub separation: f64,
    pub seed: u64,
    pub test_samples: usize,
    pub out: PathBuf,
    /// Defaults to `<out stem>.test.<ext>` next to `out`.
    pub test_out: Option<PathBuf>,
}

pub fn default_test_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into());
    let name = match out.extension() {
        Some(ext) => format!("{stem}.test.{}", ext.to_string_lossy()),
        None => format!("{stem}.test"),
    };
    out.with_file_name(name)
}

fn render(samples: &[Sample], comment: &str) -> Result<String> {
    let mut buf = Vec::new();
    Dataset::write_samples(samples, &mut buf)?;
    Ok(format!("{comment}{}", String::from_utf8_lossy(&buf)))
}

/// Writes the training file in round-robin order (`label, features...`) and,
/// when `test_samples > 0`, a held-out file in the same format. Returns the
/// paths written.
pub fn cmd_gen_data(req: &GenDataRequest) -> Result<Vec<PathBuf>> {
    let g = generate_dataset(req.n_features, req.samples_per_node, req.m, req.separation, req.seed, req.test_samples)?;
    let comment = format!(
        "# n_features={} samples_per_node={} m={} separation={} seed={}\n",
        req.n_features, req.samples_per_node, req.m, req.separation, req.seed
    );
    write_file(&req.out, &render(&g.samples, &comment)?)?;
    let mut written = vec![req.out.clone()];
    if req.test_samples > 0 {
        let path = req.test_out.clone().unwrap_or_else(|| default_test_path(&req.out));
        write_file(&path, &render(&g.test, &comment)?)?;
        written.push(path);
    }
    Ok(written)
}
