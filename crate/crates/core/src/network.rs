//! Communication graphs and doubly stochastic mixing matrices.
//!
//! Nodes are 0-based in memory and 1-based in the edge-list text format.

use std::collections::{BTreeSet, VecDeque};
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Tolerance on row/column sums and symmetry accepted by [`spectral_rho`].
pub const STOCHASTIC_TOL: f64 = 1e-10;

/// Undirected simple graph. Self-loops are implicit and never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    m: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    pub fn empty(m: usize) -> Self {
        Self { m, edges: BTreeSet::new() }
    }

    pub fn from_edges(m: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::empty(m);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn complete(m: usize) -> Self {
        let mut g = Self::empty(m);
        for i in 0..m {
            for j in i + 1..m {
                g.edges.insert((i, j));
            }
        }
        g
    }

    /// Cycle `0 - 1 - ... - (m-1) - 0`; a single edge for `m = 2`.
    pub fn ring(m: usize) -> Self {
        let mut g = Self::path(m);
        if m > 2 {
            g.edges.insert((0, m - 1));
        }
        g
    }

    pub fn path(m: usize) -> Self {
        let mut g = Self::empty(m);
        for i in 1..m {
            g.edges.insert((i - 1, i));
        }
        g
    }

    /// Node 0 joined to every other node.
    pub fn star(m: usize) -> Self {
        let mut g = Self::empty(m);
        for i in 1..m {
            g.edges.insert((0, i));
        }
        g
    }

    /// Adds the undirected edge `{i, j}`. Returns whether it was new.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<bool> {
        if i >= self.m || j >= self.m {
            return Err(Error::Config(format!("edge ({}, {}) outside 1..={}", i + 1, j + 1, self.m)));
        }
        if i == j {
            return Err(Error::Config(format!("self-loop at node {}", i + 1)));
        }
        Ok(self.edges.insert((i.min(j), i.max(j))))
    }

    pub fn nodes(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.m];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn is_connected(&self) -> bool {
        if self.m == 0 {
            return false;
        }
        let mut adj = vec![Vec::new(); self.m];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.m];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.m
    }

    /// Writes one `i j` line per edge, 1-based.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# nodes {}", self.m)?;
        for &(i, j) in &self.edges {
            writeln!(w, "{} {}", i + 1, j + 1)?;
        }
        Ok(())
    }

    /// Reads an edge list. The node count comes from a `# nodes m` line when
    /// present, otherwise from the largest index seen.
    pub fn read_edge_list<R: BufRead>(r: R) -> Result<Self> {
        let mut declared = None;
        let mut pairs = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if let Some(rest) = trimmed.strip_prefix('#') {
                if let Some(m) = rest.trim().strip_prefix("nodes") {
                    declared = Some(m.trim().parse::<usize>().map_err(|_| Error::Data {
                        line: lineno + 1,
                        msg: format!("invalid node count {:?}", m.trim()),
                    })?);
                }
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            let mut it = trimmed.split_whitespace().map(|s| s.parse::<usize>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(i)), Some(Ok(j)), None) if i >= 1 && j >= 1 => pairs.push((i - 1, j - 1)),
                _ => {
                    return Err(Error::Data { line: lineno + 1, msg: format!("expected `i j`, got {trimmed:?}") })
                }
            }
        }
        let m = declared.unwrap_or_else(|| pairs.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0));
        Self::from_edges(m, pairs)
    }
}

/// Erdős–Rényi graph `G(m, p)`, resampled with `seed + 1, seed + 2, ...` until connected.
pub fn erdos_renyi(m: usize, p: f64, seed: u64) -> Result<Graph> {
    erdos_renyi_with_budget(m, p, seed, 1000)
}

pub fn erdos_renyi_with_budget(m: usize, p: f64, seed: u64, attempts: usize) -> Result<Graph> {
    if m < 2 {
        return Err(Error::Config(format!("Erdős–Rényi graph needs m >= 2, got {m}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!("edge probability must lie in (0, 1], got {p}")));
    }
    for attempt in 0..attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
        let mut g = Graph::empty(m);
        for i in 0..m {
            for j in i + 1..m {
                if rng.random::<f64>() < p {
                    g.edges.insert((i, j));
                }
            }
        }
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Generation { attempts })
}

/// Symmetric doubly stochastic weights with the spectral quantity
/// `rho = ‖W − 11ᵀ/m‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    w: DMatrix<f64>,
    rho: f64,
}

impl MixingMatrix {
    /// Validates `w` and rejects `rho >= 1`.
    pub fn from_weights(w: DMatrix<f64>) -> Result<Self> {
        let rho = spectral_rho(&w)?;
        if !(rho < 1.0) {
            return Err(Error::InvalidNetwork(rho));
        }
        Ok(Self { w, rho })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn nodes(&self) -> usize {
        self.w.nrows()
    }

    /// Writes the matrix as comma-separated rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# rho {:e}", self.rho)?;
        for row in self.w.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Metropolis–Hastings weights `w_ij = 1 / (1 + max(deg_i, deg_j))`.
pub fn metropolis_weights(g: &Graph) -> Result<MixingMatrix> {
    if !g.is_connected() {
        return Err(Error::NotConnected);
    }
    let m = g.nodes();
    let deg = g.degrees();
    let mut w = DMatrix::zeros(m, m);
    for (i, j) in g.edges() {
        let v = 1.0 / (1 + deg[i].max(deg[j])) as f64;
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    let rho = spectral_rho(&w)?;
    if !(rho < 1.0) {
        return Err(Error::InvalidNetwork(rho));
    }
    Ok(MixingMatrix { w, rho })
}

/// Square of the largest singular value of `W − 11ᵀ/m`.
pub fn spectral_rho(w: &DMatrix<f64>) -> Result<f64> {
    let m = w.nrows();
    if m == 0 || w.ncols() != m {
        return Err(Error::NotDoublyStochastic(format!("matrix is {}x{}, expected square", w.nrows(), w.ncols())));
    }
    let mut problems = Vec::new();
    for i in 0..m {
        let row: f64 = w.row(i).sum();
        if (row - 1.0).abs() > STOCHASTIC_TOL {
            problems.push(format!("row {} sums to {row}", i + 1));
        }
        let col: f64 = w.column(i).sum();
        if (col - 1.0).abs() > STOCHASTIC_TOL {
            problems.push(format!("column {} sums to {col}", i + 1));
        }
    }
    let asym = (w - w.transpose()).amax();
    if asym > STOCHASTIC_TOL {
        problems.push(format!("asymmetry {asym:e}"));
    }
    if !problems.is_empty() {
        return Err(Error::NotDoublyStochastic(problems.join("; ")));
    }
    let centered = w.map(|v| v - 1.0 / m as f64);
    // Symmetrize to remove rounding asymmetry before the eigen-solve.
    let sym = (&centered + centered.transpose()) * 0.5;
    let sigma = sym.symmetric_eigenvalues().abs().max();
    Ok(sigma * sigma)
}
