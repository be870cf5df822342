use nalgebra::{DMatrix, DVector};

use super::{BilevelProblem, PartialGrad, SecondOrder, SmoothnessInput};
use crate::error::{Error, Result};

/// Scalar quadratic family with `f_i = ½(a_i y − b_i)²` and
/// `g_i = ½(c_i x + d_i y − e_i)²` (so `n = r = 1`).
///
/// The inner solution is affine, `y*(x) = p − q x` with
/// `p = mean(d e)/mean(d²)` and `q = mean(c d)/mean(d²)`.
#[derive(Debug, Clone)]
pub struct SyntheticQuadratic {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    x_radius: f64,
}

/// Default half-width of the outer box over which `C_fy` is evaluated.
pub const DEFAULT_X_RADIUS: f64 = 2.0;

pub fn make_synthetic_quadratic(
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
) -> Result<SyntheticQuadratic> {
    let m = a.len();
    if m == 0 {
        return Err(Error::Config("synthetic quadratic needs at least one node".into()));
    }
    for (name, v) in [("b", &b), ("c", &c), ("d", &d), ("e", &e)] {
        if v.len() != m {
            return Err(Error::Config(format!(
                "coefficient sequence `{name}` has length {} but `a` has length {m}",
                v.len()
            )));
        }
    }
    if let Some(i) = d.iter().position(|&di| di == 0.0) {
        return Err(Error::NotStronglyConvex(format!("d_{} = 0", i + 1)));
    }
    if a.iter().chain(&b).chain(&c).chain(&d).chain(&e).any(|v| !v.is_finite()) {
        return Err(Error::Config("coefficients must be finite".into()));
    }
    Ok(SyntheticQuadratic { a, b, c, d, e, x_radius: DEFAULT_X_RADIUS })
}

/// The ten-node instance: `a_i = 2`, `b_i = i`, `c_i = d_i = 2` for the first five nodes
/// and `4` for the rest, `e_i = 10`.
pub fn reference_synthetic() -> SyntheticQuadratic {
    let m = 10;
    let a = vec![2.0; m];
    let b = (1..=m).map(|i| i as f64).collect();
    let cd: Vec<f64> = (0..m).map(|i| if i < 5 { 2.0 } else { 4.0 }).collect();
    let e = vec![10.0; m];
    make_synthetic_quadratic(a, b, cd.clone(), cd, e).expect("fixed parameters are valid")
}

fn mean(v: impl Iterator<Item = f64>, m: usize) -> f64 {
    v.sum::<f64>() / m as f64
}

impl SyntheticQuadratic {
    /// Sets the half-width `R` of the box `|x| ≤ R` used to bound `‖∇_y f_i(x, y*(x))‖`.
    pub fn with_x_radius(mut self, radius: f64) -> Self {
        self.x_radius = radius.abs();
        self
    }

    pub fn x_radius(&self) -> f64 {
        self.x_radius
    }

    fn m(&self) -> usize {
        self.a.len()
    }

    /// Returns `(p, q)` with `y*(x) = p − q x`.
    pub fn inner_affine(&self) -> (f64, f64) {
        let m = self.m();
        let dd = mean(self.d.iter().map(|d| d * d), m);
        let de = mean(self.d.iter().zip(&self.e).map(|(d, e)| d * e), m);
        let cd = mean(self.c.iter().zip(&self.d).map(|(c, d)| c * d), m);
        (de / dd, cd / dd)
    }

    /// Closed-form minimizer of `(1/m) Σ [f_i + λ g_i]` in `y`.
    pub fn penalized_argmin(&self, x: f64, lambda: f64) -> f64 {
        let m = self.m();
        let aa = mean(self.a.iter().map(|a| a * a), m);
        let ab = mean(self.a.iter().zip(&self.b).map(|(a, b)| a * b), m);
        let dd = mean(self.d.iter().map(|d| d * d), m);
        let de = mean(self.d.iter().zip(&self.e).map(|(d, e)| d * e), m);
        let cd = mean(self.c.iter().zip(&self.d).map(|(c, d)| c * d), m);
        (ab + lambda * (de - cd * x)) / (aa + lambda * dd)
    }

    fn residual_g(&self, i: usize, x: f64, y: f64) -> f64 {
        self.c[i] * x + self.d[i] * y - self.e[i]
    }
}

impl BilevelProblem for SyntheticQuadratic {
    fn nodes(&self) -> usize {
        self.m()
    }
    fn outer_dim(&self) -> usize {
        1
    }
    fn inner_dim(&self) -> usize {
        1
    }

    fn outer_value(&self, i: usize, _x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let t = self.a[i] * y[0] - self.b[i];
        0.5 * t * t
    }

    fn inner_value(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let t = self.residual_g(i, x[0], y[0]);
        0.5 * t * t
    }

    fn outer_grad(&self, i: usize, _x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad {
        let gy = self.a[i] * (self.a[i] * y[0] - self.b[i]);
        PartialGrad::new(DVector::from_element(1, 0.0), DVector::from_element(1, gy))
    }

    fn inner_grad(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> PartialGrad {
        let t = self.residual_g(i, x[0], y[0]);
        PartialGrad::new(
            DVector::from_element(1, self.c[i] * t),
            DVector::from_element(1, self.d[i] * t),
        )
    }

    fn second_order(&self, i: usize, _x: &DVector<f64>, _y: &DVector<f64>) -> Option<SecondOrder> {
        Some(SecondOrder {
            xy: DMatrix::from_element(1, 1, self.c[i] * self.d[i]),
            yy: DMatrix::from_element(1, 1, self.d[i] * self.d[i]),
        })
    }

    fn exact_inner_argmin(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let (p, q) = self.inner_affine();
        Some(DVector::from_element(1, p - q * x[0]))
    }

    fn exact_outer_optimum(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        // Φ(x) = (1/m) Σ ½(a_i (p − q x) − b_i)², stationary where p − q x = mean(ab)/mean(a²).
        let m = self.m();
        let (p, q) = self.inner_affine();
        let aa = mean(self.a.iter().map(|a| a * a), m);
        let ab = mean(self.a.iter().zip(&self.b).map(|(a, b)| a * b), m);
        if q == 0.0 || aa == 0.0 {
            return None;
        }
        let y = ab / aa;
        let x = (p - y) / q;
        Some((DVector::from_element(1, x), DVector::from_element(1, y)))
    }

    fn smoothness(&self) -> SmoothnessInput {
        let mu_g = self.d.iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
        let l_f1 = self.a.iter().map(|a| a * a).fold(0.0, f64::max);
        // [[c², cd], [cd, d²]] is rank one with eigenvalue c² + d².
        let l_g1 = self.c.iter().zip(&self.d).map(|(c, d)| c * c + d * d).fold(0.0, f64::max);
        // ∇_y f_i(x, y*(x)) is affine in x, so its extremes sit on the box boundary.
        let (p, q) = self.inner_affine();
        let mut c_fy: f64 = 0.0;
        for x in [-self.x_radius, self.x_radius] {
            let y = p - q * x;
            for (a, b) in self.a.iter().zip(&self.b) {
                c_fy = c_fy.max((a * (a * y - b)).abs());
            }
        }
        SmoothnessInput { mu_g, l_f1, l_g1, l_g2: 0.0, c_fy }
    }
}
