//! Bilevel problem oracles.
//!
//! A [`BilevelProblem`] exposes, for every node `i`, the local outer objective
//! `f_i(x, y)` and inner objective `g_i(x, y)` together with their partial
//! gradients. The network-level objectives are the node averages
//! `f = (1/m) Σ f_i` and `g = (1/m) Σ g_i`; the inner solution map is
//! `y*(x) = argmin_y g(x, y)` and the outer objective is `Φ(x) = f(x, y*(x))`.
//!
//! Second-order information and closed forms are optional. The solver never
//! touches [`BilevelProblem::second_order`]; only the verification oracles do.

mod counted;
mod dataset;
mod logistic;
mod minmax;
mod quadratic;

pub use counted::{Counted, OracleCounts};
pub use dataset::{generate_dataset, Dataset, GeneratedData, PartitionMode, Role, Sample};
pub use logistic::{make_logistic_hyperopt, LogisticHyperopt, DEFAULT_ETA_BOX};
pub use minmax::{make_minmax, MinMax, QuadraticSaddle, SaddleObjective};
pub use quadratic::{make_synthetic_quadratic, reference_synthetic, SyntheticQuadratic};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Partial gradients `(∇_x h, ∇_y h)` of a scalar function of `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialGrad {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl PartialGrad {
    pub fn new(x: DVector<f64>, y: DVector<f64>) -> Self {
        Self { x, y }
    }

    pub fn zeros(n: usize, r: usize) -> Self {
        Self::new(DVector::zeros(n), DVector::zeros(r))
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }

    pub(crate) fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Second-order blocks of an inner objective: `∇²_{xy} g` (n×r) and `∇²_{yy} g` (r×r).
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrder {
    pub xy: DMatrix<f64>,
    pub yy: DMatrix<f64>,
}

/// Smoothness and curvature moduli shared by all nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessInput {
    /// Strong-convexity modulus of every `g_i` in `y`.
    pub mu_g: f64,
    /// Joint smoothness of `f_i`.
    pub l_f1: f64,
    /// Joint smoothness of `g_i`.
    pub l_g1: f64,
    /// Lipschitz constant of `∇² g_i`.
    pub l_g2: f64,
    /// Bound on `‖∇_y f_i(x, y*(x))‖`.
    pub c_fy: f64,
}

impl SmoothnessInput {
    pub fn validate(&self) -> Result<()> {
        let positive = [("mu_g", self.mu_g), ("L_f1", self.l_f1), ("L_g1", self.l_g1)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        for (name, v) in [("L_g2", self.l_g2), ("C_fy", self.c_fy)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.mu_g > self.l_g1 {
            return Err(Error::Config(format!(
                "mu_g = {} exceeds L_g1 = {}",
                self.mu_g, self.l_g1
            )));
        }
        Ok(())
    }
}

/// Oracle bundle for a distributed bilevel problem over `m` nodes.
///
/// Node indices are 0-based. All oracles are pure.
pub trait BilevelProblem: Send + Sync {
    fn nodes(&self) -> usize;
    fn outer_dim(&self) -> usize;
    fn inner_dim(&self) -> usize;

    fn outer_value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64;
    fn inner_value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64;
    fn outer_grad(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad;
    fn inner_grad(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad;

    fn second_order(&self, _i: usize, _x: &DVector<f64>, _y: &DVector<f64>) -> Option<SecondOrder> {
        None
    }

    fn exact_inner_argmin(&self, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    fn exact_outer_optimum(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        None
    }

    fn smoothness(&self) -> SmoothnessInput;
}

impl<P: BilevelProblem + ?Sized> BilevelProblem for &P {
    fn nodes(&self) -> usize {
        (**self).nodes()
    }
    fn outer_dim(&self) -> usize {
        (**self).outer_dim()
    }
    fn inner_dim(&self) -> usize {
        (**self).inner_dim()
    }
    fn outer_value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (**self).outer_value(i, x, y)
    }
    fn inner_value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (**self).inner_value(i, x, y)
    }
    fn outer_grad(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad {
        (**self).outer_grad(i, x, y)
    }
    fn inner_grad(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad {
        (**self).inner_grad(i, x, y)
    }
    fn second_order(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> Option<SecondOrder> {
        (**self).second_order(i, x, y)
    }
    fn exact_inner_argmin(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        (**self).exact_inner_argmin(x)
    }
    fn exact_outer_optimum(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        (**self).exact_outer_optimum()
    }
    fn smoothness(&self) -> SmoothnessInput {
        (**self).smoothness()
    }
}

impl<P: BilevelProblem + ?Sized> BilevelProblem for Box<P> {
    fn nodes(&self) -> usize {
        (**self).nodes()
    }
    fn outer_dim(&self) -> usize {
        (**self).outer_dim()
    }
    fn inner_dim(&self) -> usize {
        (**self).inner_dim()
    }
    fn outer_value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (**self).outer_value(i, x, y)
    }
    fn inner_value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (**self).inner_value(i, x, y)
    }
    fn outer_grad(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad {
        (**self).outer_grad(i, x, y)
    }
    fn inner_grad(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad {
        (**self).inner_grad(i, x, y)
    }
    fn second_order(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> Option<SecondOrder> {
        (**self).second_order(i, x, y)
    }
    fn exact_inner_argmin(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        (**self).exact_inner_argmin(x)
    }
    fn exact_outer_optimum(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        (**self).exact_outer_optimum()
    }
    fn smoothness(&self) -> SmoothnessInput {
        (**self).smoothness()
    }
}

/// Network-averaged outer value `f(x, y) = (1/m) Σ f_i(x, y)`.
pub fn mean_outer_value<P: BilevelProblem + ?Sized>(p: &P, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let m = p.nodes();
    (0..m).map(|i| p.outer_value(i, x, y)).sum::<f64>() / m as f64
}

/// Network-averaged inner value `g(x, y)`.
pub fn mean_inner_value<P: BilevelProblem + ?Sized>(p: &P, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let m = p.nodes();
    (0..m).map(|i| p.inner_value(i, x, y)).sum::<f64>() / m as f64
}

/// Network-averaged outer gradient.
pub fn mean_outer_grad<P: BilevelProblem + ?Sized>(p: &P, x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad {
    average(p.nodes(), p.outer_dim(), p.inner_dim(), |i| p.outer_grad(i, x, y))
}

/// Network-averaged inner gradient.
pub fn mean_inner_grad<P: BilevelProblem + ?Sized>(p: &P, x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad {
    average(p.nodes(), p.outer_dim(), p.inner_dim(), |i| p.inner_grad(i, x, y))
}

fn average(m: usize, n: usize, r: usize, mut f: impl FnMut(usize) -> PartialGrad) -> PartialGrad {
    let mut acc = PartialGrad::zeros(n, r);
    for i in 0..m {
        let g = f(i);
        acc.x += g.x;
        acc.y += g.y;
    }
    let scale = 1.0 / m as f64;
    acc.x *= scale;
    acc.y *= scale;
    acc
}
