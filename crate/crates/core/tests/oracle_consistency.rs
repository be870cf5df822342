//! Analytic gradients against central differences of the value oracles, and
//! inner-solution sanity for every problem family.

use ahead_core::problems::{
    generate_dataset, make_logistic_hyperopt, make_minmax, make_synthetic_quadratic, reference_synthetic, BilevelProblem,
    Dataset, QuadraticSaddle,
};
use ahead_core::verification::{inner_solve_from, penalized_inner_solve, penalized_inner_solve_from, SolveOptions};
use nalgebra::DVector;
use proptest::prelude::*;

/// Central-difference gradient of `h(x, y)` with step `1e-6 (1 + ‖(x, y)‖)`.
fn fd_grad(h: impl Fn(&DVector<f64>, &DVector<f64>) -> f64, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let step = 1e-6 * (1.0 + (x.norm_squared() + y.norm_squared()).sqrt());
    let n = x.len();
    let mut out = DVector::zeros(n + y.len());
    for j in 0..n + y.len() {
        let (mut xu, mut yu, mut xd, mut yd) = (x.clone(), y.clone(), x.clone(), y.clone());
        if j < n {
            xu[j] += step;
            xd[j] -= step;
        } else {
            yu[j - n] += step;
            yd[j - n] -= step;
        }
        out[j] = (h(&xu, &yu) - h(&xd, &yd)) / (2.0 * step);
    }
    out
}

fn stack(x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len() + y.len(), x.iter().chain(y.iter()).cloned())
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm())
}

fn assert_oracles_consistent<P: BilevelProblem>(p: &P, i: usize, x: &DVector<f64>, y: &DVector<f64>) {
    let gf = p.outer_grad(i, x, y);
    let gg = p.inner_grad(i, x, y);
    let fd_f = fd_grad(|a, b| p.outer_value(i, a, b), x, y);
    let fd_g = fd_grad(|a, b| p.inner_value(i, a, b), x, y);
    let (af, ag) = (stack(&gf.x, &gf.y), stack(&gg.x, &gg.y));
    if af.norm() > 0.0 {
        assert!(rel_err(&af, &fd_f) <= 1e-5, "outer gradient at node {i}: {af} vs {fd_f}");
    } else {
        assert!(fd_f.norm() <= 1e-8);
    }
    assert!(rel_err(&ag, &fd_g) <= 1e-5, "inner gradient at node {i}: {ag} vs {fd_g}");
}

fn vec_strategy(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(lo..hi, len).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn synthetic_gradients_match_differences(x in -3.0..3.0f64, y in -3.0..6.0f64, i in 0usize..10) {
        let p = reference_synthetic();
        assert_oracles_consistent(&p, i, &DVector::from_element(1, x), &DVector::from_element(1, y));
    }

    #[test]
    fn saddle_gradients_match_differences(
        x in vec_strategy(3, -2.0, 2.0),
        y in vec_strategy(2, -2.0, 2.0),
        i in 0usize..4,
        seed in 0u64..1000,
    ) {
        let p = make_minmax(QuadraticSaddle::random(4, 3, 2, seed));
        assert_oracles_consistent(&p, i, &x, &y);
        let sum_x = p.inner_grad(i, &x, &y).x + p.outer_grad(i, &x, &y).x;
        let sum_y = p.inner_grad(i, &x, &y).y + p.outer_grad(i, &x, &y).y;
        prop_assert!(sum_x.iter().chain(sum_y.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn logistic_gradients_match_differences(
        x in vec_strategy(5, -2.0, 1.0),
        y in vec_strategy(5, -1.5, 1.5),
        i in 0usize..3,
    ) {
        let g = generate_dataset(5, 8, 3, 2.0, 17, 0).unwrap();
        let data = Dataset::round_robin(g.samples, 3, 2).unwrap();
        let p = make_logistic_hyperopt(&data, 3).unwrap();
        assert_oracles_consistent(&p, i, &x, &y);
    }

    #[test]
    fn exact_inner_solutions_zero_the_mean_gradient(x in -5.0..5.0f64, seed in 0u64..500) {
        let p = reference_synthetic();
        let xv = DVector::from_element(1, x);
        let y = p.exact_inner_argmin(&xv).unwrap();
        let g: f64 = (0..10).map(|i| p.inner_grad(i, &xv, &y).y[0]).sum::<f64>() / 10.0;
        prop_assert!(g.abs() <= 1e-10);

        let s = make_minmax(QuadraticSaddle::random(3, 2, 3, seed));
        let xv = DVector::from_vec(vec![x / 2.0, -x / 3.0]);
        let y = s.exact_inner_argmin(&xv).unwrap();
        let mut acc = DVector::zeros(3);
        for i in 0..3 {
            acc += s.inner_grad(i, &xv, &y).y;
        }
        prop_assert!((acc / 3.0).norm() <= 1e-10);
    }

    #[test]
    fn inner_solve_is_start_independent(x in -2.0..2.0f64, s1 in -20.0..20.0f64, s2 in -20.0..20.0f64) {
        let p = make_synthetic_quadratic(
            vec![1.0, 2.0, 3.0], vec![0.5, -1.0, 2.0], vec![1.0, -2.0, 0.5], vec![1.0, 2.0, 1.5], vec![3.0, 1.0, -1.0],
        ).unwrap();
        let opts = SolveOptions::gradient(1e-10);
        let xv = DVector::from_element(1, x);
        let a = inner_solve_from(&p, &xv, &DVector::from_element(1, s1), &opts);
        let b = inner_solve_from(&p, &xv, &DVector::from_element(1, s2), &opts);
        prop_assert!(a.converged && b.converged);
        prop_assert!((a.y[0] - b.y[0]).abs() <= 2.0 * opts.tol / p.smoothness().mu_g);
        prop_assert!((a.y[0] - p.exact_inner_argmin(&xv).unwrap()[0]).abs() <= 2.0 * opts.tol / p.smoothness().mu_g);
    }

    #[test]
    fn logistic_inner_solve_is_start_independent(x in vec_strategy(4, -1.0, 0.5), start in vec_strategy(4, -3.0, 3.0)) {
        let g = generate_dataset(4, 10, 2, 2.0, 5, 0).unwrap();
        let data = Dataset::round_robin(g.samples, 2, 2).unwrap();
        let p = make_logistic_hyperopt(&data, 2).unwrap();
        let opts = SolveOptions::newton(1e-10);
        let a = inner_solve_from(&p, &x, &DVector::zeros(4), &opts);
        let b = inner_solve_from(&p, &x, &start, &opts);
        prop_assert!(a.converged && b.converged);
        prop_assert!((&a.y - &b.y).norm() <= 2.0 * opts.tol / p.smoothness().mu_g);
        let gd = inner_solve_from(&p, &x, &start, &SolveOptions::gradient(1e-9));
        prop_assert!(gd.converged);
        prop_assert!((&a.y - &gd.y).norm() <= 2e-9 / p.smoothness().mu_g);
    }

    #[test]
    fn minmax_penalized_solution_is_inner_solution(x in vec_strategy(2, -2.0, 2.0), lambda in 1.5..10.0f64, seed in 0u64..200) {
        let p = make_minmax(QuadraticSaddle::random(3, 2, 3, seed));
        let opts = SolveOptions::gradient(1e-10);
        let exact = p.exact_inner_argmin(&x).unwrap();
        let pen = penalized_inner_solve_from(&p, &x, lambda, &DVector::zeros(3), &opts);
        prop_assert!(pen.converged);
        // The penalized objective is (1 − λ) f, strongly convex with modulus (λ − 1) μ.
        let mu = p.smoothness().mu_g;
        prop_assert!((pen.y - &exact).norm() <= opts.tol / ((lambda - 1.0) * mu));
        let warm = penalized_inner_solve(&p, &x, lambda, &opts);
        prop_assert!((warm.y - exact).norm() <= 2.0 * opts.tol);
    }
}

#[test]
fn bilinear_saddle_inner_solution_is_identity() {
    let p = make_minmax(QuadraticSaddle::bilinear(3));
    for x in [-1.5, 0.0, 0.7] {
        let xv = DVector::from_element(1, x);
        assert_eq!(p.exact_inner_argmin(&xv).unwrap()[0], x);
    }
}
