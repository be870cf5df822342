//! Labelled binary-classification samples partitioned across nodes.
//!
//! Text format: one sample per line, fields separated by a single delimiter
//! (comma by default), lines starting with `#` ignored.
//!
//! * round-robin files: `label, x_1, ..., x_n`
//! * assignment-column files: `label, node, role, x_1, ..., x_n` with a 1-based
//!   node index and role `train` or `val`
//!
//! Labels in `{0, 1}` are remapped to `{-1, +1}`.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Validation,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Validation => "val",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    /// Either `-1.0` or `+1.0`.
    pub label: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    /// Sample `j` goes to node `j mod m`; within a node the `t`-th sample is
    /// used for validation when `t mod val_every == val_every - 1`.
    RoundRobin { val_every: usize },
    /// Node and role are read from the second and third fields.
    Column,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    assignment: Vec<(usize, Role)>,
    nodes: usize,
    dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, assignment: Vec<(usize, Role)>, nodes: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("dataset is empty".into()));
        }
        if samples.len() != assignment.len() {
            return Err(Error::Config(format!(
                "{} samples but {} assignments",
                samples.len(),
                assignment.len()
            )));
        }
        let dim = samples[0].features.len();
        if dim == 0 {
            return Err(Error::Config("samples have no features".into()));
        }
        for (j, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::Data {
                    line: j + 1,
                    msg: format!("expected {dim} features, found {}", s.features.len()),
                });
            }
            if s.label != 1.0 && s.label != -1.0 {
                return Err(Error::Data { line: j + 1, msg: format!("label {} is not ±1", s.label) });
            }
        }
        let mut train = vec![0usize; nodes];
        let mut val = vec![0usize; nodes];
        for &(node, role) in &assignment {
            if node >= nodes {
                return Err(Error::Config(format!("node index {} exceeds m = {nodes}", node + 1)));
            }
            match role {
                Role::Train => train[node] += 1,
                Role::Validation => val[node] += 1,
            }
        }
        for i in 0..nodes {
            if train[i] == 0 || val[i] == 0 {
                return Err(Error::Config(format!(
                    "node {} has {} training and {} validation samples; both must be nonempty",
                    i + 1,
                    train[i],
                    val[i]
                )));
            }
        }
        Ok(Self { samples, assignment, nodes, dim })
    }

    pub fn round_robin(samples: Vec<Sample>, nodes: usize, val_every: usize) -> Result<Self> {
        if nodes == 0 || val_every < 2 {
            return Err(Error::Config("round-robin partition needs m >= 1 and val_every >= 2".into()));
        }
        let assignment = (0..samples.len())
            .map(|j| {
                let t = j / nodes;
                let role = if t % val_every == val_every - 1 { Role::Validation } else { Role::Train };
                (j % nodes, role)
            })
            .collect();
        Self::new(samples, assignment, nodes)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn assignment(&self) -> &[(usize, Role)] {
        &self.assignment
    }

    /// Samples of node `i` with the given role, in file order.
    pub fn node_samples(&self, i: usize, role: Role) -> impl Iterator<Item = &Sample> {
        self.samples
            .iter()
            .zip(&self.assignment)
            .filter(move |(_, &(node, r))| node == i && r == role)
            .map(|(s, _)| s)
    }

    pub fn read_path(path: impl AsRef<Path>, nodes: usize, mode: PartitionMode, delimiter: u8) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::read(file, nodes, mode, delimiter)
    }

    pub fn read<R: Read>(reader: R, nodes: usize, mode: PartitionMode, delimiter: u8) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .delimiter(delimiter)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut samples = Vec::new();
        let mut assignment = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let data_err = |msg: String| Error::Data { line, msg };
            let mut fields = rec.iter();
            let label = parse_label(fields.next().unwrap_or("")).map_err(data_err)?;
            if let PartitionMode::Column = mode {
                let node: usize = fields
                    .next()
                    .and_then(|s| s.parse().ok())
                    .filter(|&n: &usize| n >= 1)
                    .ok_or_else(|| data_err("missing or invalid 1-based node column".into()))?;
                let role = match fields.next() {
                    Some("train") => Role::Train,
                    Some("val") => Role::Validation,
                    other => return Err(data_err(format!("invalid role {other:?}, expected train or val"))),
                };
                assignment.push((node - 1, role));
            }
            let features = fields
                .map(|s| s.parse::<f64>().map_err(|_| data_err(format!("invalid feature {s:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = samples.first() {
                let first: &Sample = first;
                if first.features.len() != features.len() {
                    return Err(data_err(format!(
                        "expected {} features, found {}",
                        first.features.len(),
                        features.len()
                    )));
                }
            }
            samples.push(Sample { features, label });
        }
        match mode {
            PartitionMode::RoundRobin { val_every } => Self::round_robin(samples, nodes, val_every),
            PartitionMode::Column => Self::new(samples, assignment, nodes),
        }
    }

    /// Writes `label, features...` lines (the round-robin format).
    pub fn write_samples<W: Write>(samples: &[Sample], writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for s in samples {
            let mut row = Vec::with_capacity(s.features.len() + 1);
            row.push(format!("{}", s.label as i32));
            row.extend(s.features.iter().map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the assignment-column format.
    pub fn write_with_assignment<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for (s, &(node, role)) in self.samples.iter().zip(&self.assignment) {
            let mut row = vec![format!("{}", s.label as i32), (node + 1).to_string(), role.as_str().to_string()];
            row.extend(s.features.iter().map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_label(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("invalid label {s:?}"))?;
    if v == 1.0 {
        Ok(1.0)
    } else if v == 0.0 || v == -1.0 {
        Ok(-1.0)
    } else {
        Err(format!("label {s:?} is not in {{-1, 0, 1}}"))
    }
}

/// Output of [`generate_dataset`].
#[derive(Debug, Clone)]
pub struct GeneratedData {
    /// `m * samples_per_node` samples in round-robin order.
    pub samples: Vec<Sample>,
    /// Held-out samples from the same distribution.
    pub test: Vec<Sample>,
    /// Unit vector separating the two classes.
    pub direction: Vec<f64>,
}

/// Two unit-variance Gaussian clusters centred at `±separation · u` for a
/// random unit vector `u`. Labels are balanced within every node.
pub fn generate_dataset(
    n_features: usize,
    samples_per_node: usize,
    m: usize,
    separation: f64,
    seed: u64,
    test_samples: usize,
) -> Result<GeneratedData> {
    if n_features == 0 || samples_per_node == 0 || m == 0 {
        return Err(Error::Config("n_features, samples_per_node and m must be positive".into()));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::Config(format!("separation must be >= 0, got {separation}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = (0..n_features).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    u.iter_mut().for_each(|v| *v /= norm);

    let labels_per_node: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let mut l: Vec<f64> = (0..samples_per_node).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
            l.shuffle(&mut rng);
            l
        })
        .collect();

    let draw = |label: f64, rng: &mut ChaCha8Rng| Sample {
        features: u
            .iter()
            .map(|&ut| label * separation * ut + Distribution::<f64>::sample(&StandardNormal, rng))
            .collect(),
        label,
    };

    let mut samples = Vec::with_capacity(m * samples_per_node);
    for j in 0..m * samples_per_node {
        let label = labels_per_node[j % m][j / m];
        samples.push(draw(label, &mut rng));
    }
    let test = (0..test_samples)
        .map(|t| draw(if t % 2 == 0 { 1.0 } else { -1.0 }, &mut rng))
        .collect();
    Ok(GeneratedData { samples, test, direction: u })
}
