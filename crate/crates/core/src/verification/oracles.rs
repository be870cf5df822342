//! Brute-force reference oracles: inner solves, the implicit hypergradient and
//! its finite-difference counterpart.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problems::BilevelProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMethod {
    /// Fixed-step gradient descent with step `2/(μ + L)`.
    #[default]
    Gradient,
    /// Damped Newton iterations with a finite-difference Hessian of the gradient.
    Newton,
}

impl std::str::FromStr for SolveMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(Self::Gradient),
            "newton" => Ok(Self::Newton),
            other => Err(Error::Config(format!("unknown solve method {other:?} (expected gradient or newton)"))),
        }
    }
}

impl std::fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Gradient => "gradient",
            Self::Newton => "newton",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Stop once the averaged `y`-gradient norm is at most this.
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolveMethod,
}

impl SolveOptions {
    pub fn gradient(tol: f64) -> Self {
        Self { tol, max_iter: 500_000, method: SolveMethod::Gradient }
    }

    pub fn newton(tol: f64) -> Self {
        Self { tol, max_iter: 200, method: SolveMethod::Newton }
    }
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self::gradient(1e-10)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub y: DVector<f64>,
    /// Norm of the averaged `y`-gradient at `y`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Whether `y` came from the problem's closed form.
    pub exact: bool,
}

/// `y ↦ (1/m) Σ [w_f f_i(x, y) + w_g g_i(x, y)]`.
struct Objective<'a, P: ?Sized> {
    problem: &'a P,
    x: &'a DVector<f64>,
    w_f: f64,
    w_g: f64,
}

impl<P: BilevelProblem + ?Sized> Objective<'_, P> {
    fn value(&self, y: &DVector<f64>) -> f64 {
        let m = self.problem.nodes();
        let mut acc = 0.0;
        for i in 0..m {
            if self.w_f != 0.0 {
                acc += self.w_f * self.problem.outer_value(i, self.x, y);
            }
            if self.w_g != 0.0 {
                acc += self.w_g * self.problem.inner_value(i, self.x, y);
            }
        }
        acc / m as f64
    }

    fn grad(&self, y: &DVector<f64>) -> DVector<f64> {
        let m = self.problem.nodes();
        let mut acc = DVector::zeros(y.len());
        for i in 0..m {
            if self.w_f != 0.0 {
                acc.axpy(self.w_f, &self.problem.outer_grad(i, self.x, y).y, 1.0);
            }
            if self.w_g != 0.0 {
                acc.axpy(self.w_g, &self.problem.inner_grad(i, self.x, y).y, 1.0);
            }
        }
        acc / m as f64
    }

    fn fd_hessian(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let r = y.len();
        let h = 1e-5 * (1.0 + y.norm());
        let mut hess = DMatrix::zeros(r, r);
        for j in 0..r {
            let mut up = y.clone();
            up[j] += h;
            let mut down = y.clone();
            down[j] -= h;
            hess.set_column(j, &((self.grad(&up) - self.grad(&down)) / (2.0 * h)));
        }
        (&hess + hess.transpose()) * 0.5
    }

    fn minimize(&self, start: DVector<f64>, step: f64, opts: &SolveOptions) -> InnerSolution {
        match opts.method {
            SolveMethod::Gradient => self.gradient_descent(start, step, opts),
            SolveMethod::Newton => self.newton(start, step, opts),
        }
    }

    fn gradient_descent(&self, start: DVector<f64>, mut step: f64, opts: &SolveOptions) -> InnerSolution {
        let mut y = start;
        let mut g = self.grad(&y);
        let mut value = self.value(&y);
        let mut iterations = 0;
        while g.norm() > opts.tol && iterations < opts.max_iter {
            let cand = &y - &g * step;
            if cand == y {
                // The step is below the resolution of `y`; `tol` is out of reach.
                break;
            }
            let cand_value = self.value(&cand);
            let cand_grad = self.grad(&cand);
            iterations += 1;
            // The nominal step relies on global smoothness bounds; halve it if they are violated here.
            let worse = !cand_value.is_finite()
                || (cand_value > value + 1e-12 * value.abs().max(1.0) && cand_grad.norm() > g.norm());
            if worse {
                step *= 0.5;
                continue;
            }
            y = cand;
            g = cand_grad;
            value = cand_value;
        }
        let residual = g.norm();
        InnerSolution { y, residual, iterations, converged: residual <= opts.tol, exact: false }
    }

    fn newton(&self, start: DVector<f64>, fallback_step: f64, opts: &SolveOptions) -> InnerSolution {
        let mut y = start;
        let mut g = self.grad(&y);
        let mut value = self.value(&y);
        let mut iterations = 0;
        while g.norm() > opts.tol && iterations < opts.max_iter {
            iterations += 1;
            let dir = match self.fd_hessian(&y).cholesky() {
                Some(ch) => ch.solve(&g),
                None => &g * fallback_step,
            };
            let slope = g.dot(&dir);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = &y - &dir * t;
                let cand_value = self.value(&cand);
                if cand_value.is_finite() {
                    let cand_grad = self.grad(&cand);
                    if cand_value <= value - 1e-4 * t * slope || cand_grad.norm() < g.norm() {
                        y = cand;
                        g = cand_grad;
                        value = cand_value;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let residual = g.norm();
        InnerSolution { y, residual, iterations, converged: residual <= opts.tol, exact: false }
    }
}

fn inner_objective<'a, P: BilevelProblem + ?Sized>(problem: &'a P, x: &'a DVector<f64>) -> Objective<'a, P> {
    Objective { problem, x, w_f: 0.0, w_g: 1.0 }
}

fn inner_step<P: BilevelProblem + ?Sized>(problem: &P) -> f64 {
    let s = problem.smoothness();
    2.0 / (s.mu_g + s.l_g1)
}

/// `y*(x) = argmin_y (1/m) Σ g_i(x, y)`.
///
/// Uses the closed form when the problem has one, refining it iteratively if
/// its residual exceeds the tolerance. Otherwise iterates from `y = 0`.
pub fn inner_solve<P: BilevelProblem + ?Sized>(problem: &P, x: &DVector<f64>, opts: &SolveOptions) -> InnerSolution {
    inner_solve_warm(problem, x, &DVector::zeros(problem.inner_dim()), opts)
}

/// Like [`inner_solve`], but starting the iterative path from `start`.
pub fn inner_solve_warm<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    start: &DVector<f64>,
    opts: &SolveOptions,
) -> InnerSolution {
    if let Some(y) = problem.exact_inner_argmin(x) {
        let residual = inner_objective(problem, x).grad(&y).norm();
        if residual <= opts.tol {
            return InnerSolution { y, residual, iterations: 0, converged: true, exact: true };
        }
        return inner_solve_from(problem, x, &y, opts);
    }
    inner_solve_from(problem, x, start, opts)
}

/// Iterative inner solve from `start`, ignoring any closed form.
pub fn inner_solve_from<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    start: &DVector<f64>,
    opts: &SolveOptions,
) -> InnerSolution {
    inner_objective(problem, x).minimize(start.clone(), inner_step(problem), opts)
}

fn penalized_objective<'a, P: BilevelProblem + ?Sized>(
    problem: &'a P,
    x: &'a DVector<f64>,
    lambda: f64,
) -> Objective<'a, P> {
    Objective { problem, x, w_f: 1.0, w_g: lambda }
}

fn penalized_step<P: BilevelProblem + ?Sized>(problem: &P, lambda: f64) -> f64 {
    let s = problem.smoothness();
    let mu_lambda = lambda * s.mu_g / 2.0;
    let l_lambda = s.l_f1 + lambda * s.l_g1;
    2.0 / (mu_lambda + l_lambda)
}

/// `y*(x; λ) = argmin_y (1/m) Σ [f_i(x, y) + λ g_i(x, y)]`, started from `y*(x)`.
pub fn penalized_inner_solve<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    lambda: f64,
    opts: &SolveOptions,
) -> InnerSolution {
    let start = inner_solve(problem, x, opts).y;
    penalized_inner_solve_from(problem, x, lambda, &start, opts)
}

pub fn penalized_inner_solve_from<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    lambda: f64,
    start: &DVector<f64>,
    opts: &SolveOptions,
) -> InnerSolution {
    penalized_objective(problem, x, lambda).minimize(start.clone(), penalized_step(problem, lambda), opts)
}

/// `Φ` evaluated with a given inner solution: `(1/m) Σ f_i(x, y)`.
pub fn phi_at<P: BilevelProblem + ?Sized>(problem: &P, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let m = problem.nodes();
    (0..m).map(|i| problem.outer_value(i, x, y)).sum::<f64>() / m as f64
}

pub fn phi<P: BilevelProblem + ?Sized>(problem: &P, x: &DVector<f64>, opts: &SolveOptions) -> (f64, InnerSolution) {
    let sol = inner_solve(problem, x, opts);
    (phi_at(problem, x, &sol.y), sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Implicit differentiation with second-order oracles.
    Implicit,
    /// Central differences of `Φ`, used when second-order oracles are missing.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypergradient {
    pub grad: DVector<f64>,
    pub provenance: Provenance,
    pub inner: InnerSolution,
}

/// `∇Φ(x) = ∇_x f − ∇²_{xy} g (∇²_{yy} g)⁻¹ ∇_y f` at `(x, y*(x))`.
pub fn hypergradient<P: BilevelProblem + ?Sized>(problem: &P, x: &DVector<f64>, opts: &SolveOptions) -> Result<Hypergradient> {
    let inner = inner_solve(problem, x, opts);
    hypergradient_with(problem, x, inner, opts)
}

/// [`hypergradient`] given an already computed inner solution.
pub fn hypergradient_with<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    inner: InnerSolution,
    opts: &SolveOptions,
) -> Result<Hypergradient> {
    let (m, n, r) = (problem.nodes(), problem.outer_dim(), problem.inner_dim());
    let y = &inner.y;
    let mut xy = DMatrix::zeros(n, r);
    let mut yy = DMatrix::zeros(r, r);
    let mut fx = DVector::zeros(n);
    let mut fy = DVector::zeros(r);
    for i in 0..m {
        let Some(so) = problem.second_order(i, x, y) else {
            let h = 1e-5 * (1.0 + x.norm());
            let grad = finite_diff_hypergradient_from(problem, x, h, y, opts)?;
            return Ok(Hypergradient { grad, provenance: Provenance::FiniteDifference, inner });
        };
        xy += so.xy;
        yy += so.yy;
        let g = problem.outer_grad(i, x, y);
        fx += g.x;
        fy += g.y;
    }
    let scale = 1.0 / m as f64;
    let (xy, yy, fx, fy) = (xy * scale, yy * scale, fx * scale, fy * scale);
    let chol = yy
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("averaged inner Hessian is not positive definite".into()))?;
    let v = chol.solve(&fy);
    let grad = fx - xy * v;
    Ok(Hypergradient { grad, provenance: Provenance::Implicit, inner })
}

/// Central differences of `x ↦ Φ(x)` with step `h` in every coordinate.
pub fn finite_diff_hypergradient<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    h: f64,
    opts: &SolveOptions,
) -> Result<DVector<f64>> {
    let center = inner_solve(problem, x, opts);
    finite_diff_hypergradient_from(problem, x, h, &center.y, opts)
}

fn finite_diff_hypergradient_from<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    h: f64,
    warm: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<DVector<f64>> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let n = x.len();
    let mut grad = DVector::zeros(n);
    let eval = |xp: &DVector<f64>| -> Result<f64> {
        let sol = inner_solve_warm(problem, xp, warm, opts);
        if !sol.converged {
            return Err(Error::Numerical(format!(
                "inner solve stopped at residual {:e} after {} iterations",
                sol.residual, sol.iterations
            )));
        }
        Ok(phi_at(problem, xp, &sol.y))
    };
    for j in 0..n {
        let mut up = x.clone();
        up[j] += h;
        let mut down = x.clone();
        down[j] -= h;
        grad[j] = (eval(&up)? - eval(&down)?) / (2.0 * h);
    }
    Ok(grad)
}

/// `∇_x f(x, ŷ_λ) + λ (∇_x g(x, ŷ_λ) − ∇_x g(x, ŷ))`, averaged over nodes, where
/// `ŷ_λ` and `ŷ` are the penalized and plain inner solutions.
pub fn penalty_gradient<P: BilevelProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    lambda: f64,
    y_pen: &DVector<f64>,
    y_inner: &DVector<f64>,
) -> DVector<f64> {
    let m = problem.nodes();
    let mut acc = DVector::zeros(x.len());
    for i in 0..m {
        let f = problem.outer_grad(i, x, y_pen);
        let gp = problem.inner_grad(i, x, y_pen);
        let gi = problem.inner_grad(i, x, y_inner);
        acc += f.x + (gp.x - gi.x) * lambda;
    }
    acc / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_minmax, reference_synthetic, QuadraticSaddle};
    use approx::assert_relative_eq;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn synthetic_inner_solutions() {
        let p = reference_synthetic();
        let opts = SolveOptions::default();
        let s0 = inner_solve(&p, &v(0.0), &opts);
        assert!(s0.exact && s0.converged);
        assert_relative_eq!(s0.y[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(inner_solve(&p, &v(0.25), &opts).y[0], 2.75, epsilon = 1e-12);
        let a = inner_solve_from(&p, &v(0.7), &v(-10.0), &opts);
        let b = inner_solve_from(&p, &v(0.7), &v(10.0), &opts);
        assert!(a.converged && b.converged && !a.exact);
        assert!((a.y[0] - b.y[0]).abs() <= 2.0 * opts.tol / p.smoothness().mu_g);
    }

    #[test]
    fn synthetic_penalized_solutions() {
        let p = reference_synthetic();
        let opts = SolveOptions::default();
        let at_opt = penalized_inner_solve(&p, &v(0.25), 20.0, &opts);
        assert!(at_opt.converged);
        assert_relative_eq!(at_opt.y[0], 2.75, epsilon = 1e-11);
        let at_zero = penalized_inner_solve_from(&p, &v(0.0), 20.0, &v(0.0), &opts);
        assert!(at_zero.converged);
        assert_relative_eq!(at_zero.y[0], 611.0 / 204.0, epsilon = 1e-11);
    }

    #[test]
    fn newton_matches_gradient_descent() {
        let p = reference_synthetic();
        let g = penalized_inner_solve_from(&p, &v(0.3), 5.0, &v(0.0), &SolveOptions::gradient(1e-11));
        let n = penalized_inner_solve_from(&p, &v(0.3), 5.0, &v(0.0), &SolveOptions::newton(1e-11));
        assert!(n.converged && n.iterations < 10);
        assert_relative_eq!(g.y[0], n.y[0], epsilon = 1e-11);
    }

    #[test]
    fn synthetic_hypergradient_closed_form() {
        let p = reference_synthetic();
        let opts = SolveOptions::default();
        for x in [0.0, 0.25, 1.0, -1.3] {
            let h = hypergradient(&p, &v(x), &opts).unwrap();
            assert_eq!(h.provenance, Provenance::Implicit);
            assert_relative_eq!(h.grad[0], 4.0 * x - 1.0, epsilon = 1e-12);
        }
        let fd = finite_diff_hypergradient(&p, &v(1.0), 1e-5, &opts).unwrap();
        assert_relative_eq!(fd[0], 3.0, epsilon = 1e-8);
        let fd_half = finite_diff_hypergradient(&p, &v(1.0), 5e-6, &opts).unwrap();
        assert_relative_eq!(fd[0], fd_half[0], epsilon = 1e-8);
    }

    #[test]
    fn minmax_penalized_solution_matches_argmax() {
        let p = make_minmax(QuadraticSaddle::random(3, 2, 3, 11));
        let opts = SolveOptions::default();
        let x = DVector::from_vec(vec![0.4, -0.9]);
        let exact = inner_solve(&p, &x, &opts).y;
        let pen = penalized_inner_solve_from(&p, &x, 2.0, &DVector::zeros(3), &opts);
        assert!(pen.converged);
        assert!((pen.y - &exact).norm() <= 2.0 * opts.tol);
        let gp = penalty_gradient(&p, &x, 2.0, &exact, &exact);
        let h = hypergradient(&p, &x, &opts).unwrap();
        assert!((gp - h.grad).norm() <= 1e-9);
    }

    #[test]
    fn rejects_nonpositive_difference_step() {
        assert!(finite_diff_hypergradient(&reference_synthetic(), &v(0.0), 0.0, &SolveOptions::default()).is_err());
    }
}
