use nalgebra::{DMatrix, DVector};

use super::dataset::{Dataset, Role};
use super::{BilevelProblem, PartialGrad, SecondOrder, SmoothnessInput};
use crate::error::{Error, Result};

/// Hyperparameter tuning for ℓ2-regularized logistic regression.
///
/// The outer variable `η ∈ R^n` sets per-coordinate regularization weights
/// `e^η`; the inner variable `y ∈ R^n` is the model. For node `i`:
///
/// * `f_i(η, y) = Σ_{val} log(1 + exp(−b sᵀy))`
/// * `g_i(η, y) = Σ_{train} log(1 + exp(−b sᵀy)) + yᵀ diag(e^η) y`
///
/// Every node carries the full regularizer so that each `g_i` is strongly convex.
#[derive(Debug, Clone)]
pub struct LogisticHyperopt {
    nodes: Vec<NodeData>,
    dim: usize,
    smoothness: SmoothnessInput,
}

#[derive(Debug, Clone)]
struct NodeData {
    /// Rows are `b_j s_j` for training samples.
    train: DMatrix<f64>,
    /// Rows are `b_j s_j` for validation samples.
    val: DMatrix<f64>,
}

/// Box `η ∈ [lo, hi]^n` used when no explicit smoothness is supplied.
pub const DEFAULT_ETA_BOX: (f64, f64) = (-3.0, 1.0);

pub fn make_logistic_hyperopt(data: &Dataset, m: usize) -> Result<LogisticHyperopt> {
    if data.nodes() != m {
        return Err(Error::Config(format!("dataset is partitioned over {} nodes, expected {m}", data.nodes())));
    }
    let n = data.dim();
    let signed = |i: usize, role: Role| {
        let rows: Vec<&super::Sample> = data.node_samples(i, role).collect();
        DMatrix::from_fn(rows.len(), n, |j, t| rows[j].label * rows[j].features[t])
    };
    let nodes: Vec<NodeData> = (0..m)
        .map(|i| NodeData { train: signed(i, Role::Train), val: signed(i, Role::Validation) })
        .collect();
    if let Some(i) = nodes.iter().position(|nd| nd.train.nrows() == 0 || nd.val.nrows() == 0) {
        return Err(Error::Config(format!("node {} has an empty train or validation subset", i + 1)));
    }
    let mut p = LogisticHyperopt {
        nodes,
        dim: n,
        smoothness: SmoothnessInput { mu_g: 1.0, l_f1: 1.0, l_g1: 1.0, l_g2: 0.0, c_fy: 0.0 },
    };
    p.smoothness = p.box_smoothness(DEFAULT_ETA_BOX.0, DEFAULT_ETA_BOX.1);
    Ok(p)
}

/// Numerically stable `log(1 + e^u)`.
fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// Logistic function `1 / (1 + e^{-u})`.
fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn largest_eigenvalue(gram: DMatrix<f64>) -> f64 {
    gram.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max)
}

impl LogisticHyperopt {
    pub fn with_smoothness(mut self, s: SmoothnessInput) -> Self {
        self.smoothness = s;
        self
    }

    /// Smoothness bounds valid for `η ∈ [eta_lo, eta_hi]^n`.
    ///
    /// `L_g1` and `L_f1` bound the `y`-block curvature (`σ' ≤ 1/4`), `L_g2` uses
    /// `|σ''| ≤ 1/(6√3)`, and `C_fy` uses `|σ| ≤ 1`.
    pub fn box_smoothness(&self, eta_lo: f64, eta_hi: f64) -> SmoothnessInput {
        let mut l_f1: f64 = 0.0;
        let mut l_g1: f64 = 0.0;
        let mut l_g2: f64 = 0.0;
        let mut c_fy: f64 = 0.0;
        let reg_hi = 2.0 * eta_hi.exp();
        for nd in &self.nodes {
            l_g1 = l_g1.max(largest_eigenvalue(nd.train.transpose() * &nd.train) / 4.0 + reg_hi);
            l_f1 = l_f1.max(largest_eigenvalue(nd.val.transpose() * &nd.val) / 4.0);
            let cubes: f64 = nd.train.row_iter().map(|r| r.norm().powi(3)).sum();
            l_g2 = l_g2.max(cubes / (6.0 * 3f64.sqrt()) + reg_hi);
            c_fy = c_fy.max(nd.val.row_iter().map(|r| r.norm()).sum());
        }
        SmoothnessInput { mu_g: (2.0 * eta_lo.exp()).min(l_g1), l_f1, l_g1, l_g2, c_fy }
    }

    /// Fraction of samples whose label matches `sign(sᵀ y)`.
    pub fn accuracy(samples: &[super::Sample], y: &DVector<f64>) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let correct = samples
            .iter()
            .filter(|s| {
                let score: f64 = s.features.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
                score * s.label > 0.0
            })
            .count();
        correct as f64 / samples.len() as f64
    }

    fn loss(a: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
        (a * y).iter().map(|&t| softplus(-t)).sum()
    }

    /// `∇_y Σ log(1 + exp(−tⱼ))` with `t = A y`.
    fn loss_grad(a: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        let weights = (a * y).map(|t| -sigmoid(-t));
        a.tr_mul(&weights)
    }
}

impl BilevelProblem for LogisticHyperopt {
    fn nodes(&self) -> usize {
        self.nodes.len()
    }
    fn outer_dim(&self) -> usize {
        self.dim
    }
    fn inner_dim(&self) -> usize {
        self.dim
    }

    fn outer_value(&self, i: usize, _eta: &DVector<f64>, y: &DVector<f64>) -> f64 {
        Self::loss(&self.nodes[i].val, y)
    }

    fn inner_value(&self, i: usize, eta: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let reg: f64 = eta.iter().zip(y.iter()).map(|(e, v)| e.exp() * v * v).sum();
        Self::loss(&self.nodes[i].train, y) + reg
    }

    fn outer_grad(&self, i: usize, _eta: &DVector<f64>, y: &DVector<f64>) -> PartialGrad {
        PartialGrad::new(DVector::zeros(self.dim), Self::loss_grad(&self.nodes[i].val, y))
    }

    fn inner_grad(&self, i: usize, eta: &DVector<f64>, y: &DVector<f64>) -> PartialGrad {
        let scale = eta.map(f64::exp);
        let gx = scale.zip_map(y, |s, v| s * v * v);
        let gy = Self::loss_grad(&self.nodes[i].train, y) + scale.zip_map(y, |s, v| 2.0 * s * v);
        PartialGrad::new(gx, gy)
    }

    fn second_order(&self, i: usize, eta: &DVector<f64>, y: &DVector<f64>) -> Option<SecondOrder> {
        let a = &self.nodes[i].train;
        let scale = eta.map(f64::exp);
        let curv = (a * y).map(|t| sigmoid(t) * sigmoid(-t));
        let mut yy = a.tr_mul(&DMatrix::from_diagonal(&curv)) * a;
        for t in 0..self.dim {
            yy[(t, t)] += 2.0 * scale[t];
        }
        let xy = DMatrix::from_diagonal(&scale.zip_map(y, |s, v| 2.0 * s * v));
        Some(SecondOrder { xy, yy })
    }

    fn smoothness(&self) -> SmoothnessInput {
        self.smoothness
    }
}
