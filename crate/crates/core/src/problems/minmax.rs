use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BilevelProblem, PartialGrad, SecondOrder, SmoothnessInput};
use crate::error::{Error, Result};

/// Per-node objectives `f_i(x, y)` of a distributed saddle problem
/// `min_x max_y (1/m) Σ f_i(x, y)`, each strongly concave in `y`.
pub trait SaddleObjective: Send + Sync {
    fn nodes(&self) -> usize;
    fn outer_dim(&self) -> usize;
    fn inner_dim(&self) -> usize;
    fn value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64;
    fn grad(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad;
    /// `(∇²_{xy} f_i, ∇²_{yy} f_i)`.
    fn second_order(&self, _i: usize, _x: &DVector<f64>, _y: &DVector<f64>) -> Option<SecondOrder> {
        None
    }
    fn exact_argmax(&self, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
    /// `mu_g` holds the concavity modulus in `y`.
    fn smoothness(&self) -> SmoothnessInput;
}

/// Bilevel view of a saddle problem: `g_i = −f_i`.
#[derive(Debug, Clone)]
pub struct MinMax<S> {
    objective: S,
}

pub fn make_minmax<S: SaddleObjective>(objective: S) -> MinMax<S> {
    MinMax { objective }
}

impl<S> MinMax<S> {
    pub fn objective(&self) -> &S {
        &self.objective
    }
}

impl<S: SaddleObjective> BilevelProblem for MinMax<S> {
    fn nodes(&self) -> usize {
        self.objective.nodes()
    }
    fn outer_dim(&self) -> usize {
        self.objective.outer_dim()
    }
    fn inner_dim(&self) -> usize {
        self.objective.inner_dim()
    }
    fn outer_value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.objective.value(i, x, y)
    }
    fn inner_value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        -self.objective.value(i, x, y)
    }
    fn outer_grad(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad {
        self.objective.grad(i, x, y)
    }
    fn inner_grad(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad {
        self.objective.grad(i, x, y).neg()
    }
    fn second_order(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> Option<SecondOrder> {
        self.objective.second_order(i, x, y).map(|s| SecondOrder { xy: -s.xy, yy: -s.yy })
    }
    fn exact_inner_argmin(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.objective.exact_argmax(x)
    }
    fn smoothness(&self) -> SmoothnessInput {
        self.objective.smoothness()
    }
}

/// `f_i(x, y) = ½ xᵀA_i x + xᵀB_i y − ½ yᵀC_i y + s_iᵀx + t_iᵀy` with `C_i ≻ 0`.
#[derive(Debug, Clone)]
pub struct QuadraticSaddle {
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
    s: Vec<DVector<f64>>,
    t: Vec<DVector<f64>>,
    x_radius: f64,
}

impl QuadraticSaddle {
    pub fn new(
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        c: Vec<DMatrix<f64>>,
        s: Vec<DVector<f64>>,
        t: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let m = a.len();
        if m == 0 || [b.len(), c.len(), s.len(), t.len()].iter().any(|&l| l != m) {
            return Err(Error::Config("saddle coefficient lists must share a nonzero length".into()));
        }
        let n = a[0].nrows();
        let r = c[0].nrows();
        for i in 0..m {
            let shapes_ok = a[i].shape() == (n, n)
                && b[i].shape() == (n, r)
                && c[i].shape() == (r, r)
                && s[i].len() == n
                && t[i].len() == r;
            if !shapes_ok {
                return Err(Error::Config(format!("node {} has inconsistent saddle dimensions", i + 1)));
            }
            let min_eig = c[i].clone().symmetric_eigenvalues().min();
            if min_eig <= 0.0 {
                return Err(Error::NotStronglyConvex(format!(
                    "C_{} has eigenvalue {min_eig}; f_i must be strongly concave in y",
                    i + 1
                )));
            }
        }
        Ok(Self { a, b, c, s, t, x_radius: 2.0 })
    }

    /// `m` identical copies of `f(x, y) = x y − ½ y²`, whose inner solution is `y*(x) = x`.
    pub fn bilinear(m: usize) -> Self {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        Self::new(
            vec![one(0.0); m],
            vec![one(1.0); m],
            vec![one(1.0); m],
            vec![DVector::zeros(1); m],
            vec![DVector::zeros(1); m],
        )
        .expect("valid coefficients")
    }

    /// Random heterogeneous instance. Each `C_i = I + Gᵀ G / r` with Gaussian-like `G`.
    pub fn random(m: usize, n: usize, r: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mat = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
        };
        let mut a = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        let mut c = Vec::with_capacity(m);
        let mut s = Vec::with_capacity(m);
        let mut t = Vec::with_capacity(m);
        for _ in 0..m {
            let ga = mat(n, n, &mut rng);
            a.push((&ga + ga.transpose()) * 0.5);
            b.push(mat(n, r, &mut rng));
            let gc = mat(r, r, &mut rng);
            c.push(DMatrix::identity(r, r) + gc.transpose() * gc / r as f64);
            s.push(DVector::from_iterator(n, mat(n, 1, &mut rng).iter().cloned()));
            t.push(DVector::from_iterator(r, mat(r, 1, &mut rng).iter().cloned()));
        }
        Self::new(a, b, c, s, t).expect("construction yields C_i ≻ 0")
    }

    pub fn with_x_radius(mut self, radius: f64) -> Self {
        self.x_radius = radius.abs();
        self
    }

    fn mean(list: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut acc = list[0].clone();
        for mat in &list[1..] {
            acc += mat;
        }
        acc / list.len() as f64
    }

    fn mean_vec(list: &[DVector<f64>]) -> DVector<f64> {
        let mut acc = list[0].clone();
        for v in &list[1..] {
            acc += v;
        }
        acc / list.len() as f64
    }
}

impl SaddleObjective for QuadraticSaddle {
    fn nodes(&self) -> usize {
        self.a.len()
    }
    fn outer_dim(&self) -> usize {
        self.a[0].nrows()
    }
    fn inner_dim(&self) -> usize {
        self.c[0].nrows()
    }

    fn value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.a[i] * x)) + x.dot(&(&self.b[i] * y)) - 0.5 * y.dot(&(&self.c[i] * y))
            + self.s[i].dot(x)
            + self.t[i].dot(y)
    }

    fn grad(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad {
        let gx = &self.a[i] * x + &self.b[i] * y + &self.s[i];
        let gy = self.b[i].tr_mul(x) - &self.c[i] * y + &self.t[i];
        PartialGrad::new(gx, gy)
    }

    fn second_order(&self, i: usize, _x: &DVector<f64>, _y: &DVector<f64>) -> Option<SecondOrder> {
        Some(SecondOrder { xy: self.b[i].clone(), yy: -self.c[i].clone() })
    }

    fn exact_argmax(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let c = Self::mean(&self.c);
        let rhs = Self::mean(&self.b).tr_mul(x) + Self::mean_vec(&self.t);
        c.cholesky().map(|ch| ch.solve(&rhs))
    }

    fn smoothness(&self) -> SmoothnessInput {
        let n = self.outer_dim();
        let r = self.inner_dim();
        let mut mu = f64::INFINITY;
        let mut l: f64 = 0.0;
        for i in 0..self.nodes() {
            mu = mu.min(self.c[i].clone().symmetric_eigenvalues().min());
            let mut h = DMatrix::zeros(n + r, n + r);
            h.view_mut((0, 0), (n, n)).copy_from(&self.a[i]);
            h.view_mut((0, n), (n, r)).copy_from(&self.b[i]);
            h.view_mut((n, 0), (r, n)).copy_from(&self.b[i].transpose());
            h.view_mut((n, n), (r, r)).copy_from(&(-&self.c[i]));
            l = l.max(h.symmetric_eigenvalues().abs().max());
        }
        // ∇_y f_i(x, y*(x)) = (B_iᵀ − C_i C̄⁻¹ B̄ᵀ) x + (t_i − C_i C̄⁻¹ t̄), bounded on ‖x‖_∞ ≤ R.
        let c_bar_inv = Self::mean(&self.c).try_inverse().expect("C̄ ≻ 0");
        let b_bar = Self::mean(&self.b);
        let t_bar = Self::mean_vec(&self.t);
        let mut c_fy: f64 = 0.0;
        for i in 0..self.nodes() {
            let slope = self.b[i].transpose() - &self.c[i] * &c_bar_inv * b_bar.transpose();
            let offset = &self.t[i] - &self.c[i] * &c_bar_inv * &t_bar;
            c_fy = c_fy.max(slope.norm() * self.x_radius * (n as f64).sqrt() + offset.norm());
        }
        SmoothnessInput { mu_g: mu, l_f1: l.max(mu), l_g1: l.max(mu), l_g2: 0.0, c_fy }
    }
}
