use ahead_core::constants::{
    alpha_cap_terms, beta_cap_terms, derive_constants, error_floors, gamma_cap_terms, potential_coefficients,
    stepsize_caps, D4Variant, StepSizes,
};
use ahead_core::problems::{reference_synthetic, BilevelProblem, SmoothnessInput};
use proptest::prelude::*;

fn smoothness() -> impl Strategy<Value = SmoothnessInput> {
    (0.1..5.0f64, 0.1..10.0f64, 1.0..4.0f64, 0.0..3.0f64, 0.0..5.0f64).prop_map(|(mu, lf, ratio, lg2, cfy)| {
        SmoothnessInput { mu_g: mu, l_f1: lf, l_g1: mu * ratio, l_g2: lg2, c_fy: cfy }
    })
}

#[test]
fn unit_gamma_cap_by_hand() {
    let s = SmoothnessInput { mu_g: 1.0, l_f1: 1.0, l_g1: 1.0, l_g2: 1.0, c_fy: 1.0 };
    let c = derive_constants(&s, 4.0).unwrap();
    let terms = [1.0, 1.0, 1.0 / (8.0 * 780f64.sqrt()), 3096f64.sqrt() / (24.0 * 780f64.sqrt()), 1.0 / 16.0];
    let computed = gamma_cap_terms(&c, &s, 0.0);
    for (a, b) in computed.iter().zip(terms) {
        assert!((a - b).abs() <= 1e-15 * b);
    }
    assert_eq!(stepsize_caps(&c, &s, 0.0, 4.0).unwrap().gamma, terms[2]);
}

#[test]
fn unit_heterogeneity_floor_by_hand() {
    let s = SmoothnessInput { mu_g: 1.0, l_f1: 1.0, l_g1: 1.0, l_g2: 1.0, c_fy: 1.0 };
    let c = derive_constants(&s, 4.0).unwrap();
    let p = StepSizes { alpha: 1e-3, beta: 1e-3, gamma: 1e-2, lambda: 4.0, iterations: 1 };
    let first = 24.0 * 3096.0 * 16e-6;
    let second = 48.0 * 1560.0 * 16e-6 * 17.0;
    let third = 24.0 * 780.0 * 16.0 * 1e-4;
    let f = error_floors(&p, &c, &s, 0.0, 1.0, 1.0);
    assert!((f.heterogeneity - (first + second + third)).abs() <= 1e-12);
    assert!((f.heterogeneity - 51.502).abs() <= 1e-2);
}

#[test]
fn doubling_penalty_quarters_outer_gap_floor() {
    let s = reference_synthetic().smoothness();
    let l1 = 10.0;
    for l in [l1, 2.0 * l1] {
        assert!(l > 2.0 * s.l_f1 / s.mu_g);
    }
    let c1 = derive_constants(&s, l1).unwrap();
    let c2 = derive_constants(&s, 2.0 * l1).unwrap();
    let first = |c: &ahead_core::AnalysisConstants, l: f64| 2.0 * c.c_ou * c.c_ou / (l * l);
    assert_eq!(first(&c2, 2.0 * l1) * 4.0, first(&c1, l1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn constants_are_nonnegative(s in smoothness(), lambda in 0.1..100.0f64) {
        let c = derive_constants(&s, lambda).unwrap();
        for v in [c.kappa, c.l, c.l_ystar, c.c_in, c.c_ou, c.mu_lambda, c.l_lambda, c.l_ystar_lambda, c.u_lambda_sq,
                  c.w_gamma, c.w_beta, c.u_beta, c.p1, c.p2, c.p3] {
            prop_assert!(v.is_finite() && v >= 0.0);
        }
        if lambda > 2.0 * s.l_f1 / s.mu_g {
            prop_assert!(c.mu_lambda <= c.l_lambda);
        }
        if s.l_f1.max(s.l_g1).max(s.c_fy) >= s.mu_g {
            prop_assert!(c.kappa >= 1.0);
        }
    }

    #[test]
    fn caps_shrink_with_poorer_connectivity(s in smoothness(), lambda in 0.5..50.0f64) {
        let c = derive_constants(&s, lambda).unwrap();
        let g0 = gamma_cap_terms(&c, &s, 0.0);
        let g9 = gamma_cap_terms(&c, &s, 0.9);
        prop_assert!(g9.iter().zip(g0).all(|(a, b)| *a <= b));
        let b0 = beta_cap_terms(&c, &s, 0.0, lambda);
        let b9 = beta_cap_terms(&c, &s, 0.9, lambda);
        prop_assert!(b9.iter().zip(b0).all(|(a, b)| *a <= b));
        let caps0 = stepsize_caps(&c, &s, 0.0, lambda).unwrap();
        let caps9 = stepsize_caps(&c, &s, 0.9, lambda).unwrap();
        let a0 = alpha_cap_terms(&c, &s, 0.0, lambda, caps0.beta, caps0.gamma);
        let a9 = alpha_cap_terms(&c, &s, 0.9, lambda, caps9.beta, caps9.gamma);
        prop_assert!(a9.iter().zip(a0).all(|(a, b)| *a <= b));
        prop_assert!(caps9.alpha <= caps0.alpha && caps9.beta <= caps0.beta && caps9.gamma <= caps0.gamma);
    }

    #[test]
    fn doubling_penalty_never_raises_alpha_cap(s in smoothness(), lambda in 0.5..50.0f64, rho in 0.0..0.95f64) {
        let c1 = derive_constants(&s, lambda).unwrap();
        let c2 = derive_constants(&s, 2.0 * lambda).unwrap();
        let a1 = stepsize_caps(&c1, &s, rho, lambda).unwrap();
        let a2 = stepsize_caps(&c2, &s, rho, 2.0 * lambda).unwrap();
        prop_assert!(a2.alpha <= a1.alpha);
        prop_assert!(a2.beta <= a1.beta);
    }

    #[test]
    fn caps_are_positive_reproducible_and_ordered(s in smoothness(), lambda in 0.5..50.0f64, rho in 0.0..0.99f64) {
        let c = derive_constants(&s, lambda).unwrap();
        let a = stepsize_caps(&c, &s, rho, lambda).unwrap();
        let b = stepsize_caps(&derive_constants(&s, lambda).unwrap(), &s, rho, lambda).unwrap();
        prop_assert_eq!(a.alpha.to_bits(), b.alpha.to_bits());
        prop_assert_eq!(a.beta.to_bits(), b.beta.to_bits());
        prop_assert_eq!(a.gamma.to_bits(), b.gamma.to_bits());
        prop_assert!(a.alpha > 0.0 && a.beta > 0.0 && a.gamma > 0.0);
        prop_assert!(a.alpha <= a.beta);
    }

    #[test]
    fn potential_weights_scale_with_alpha(s in smoothness(), lambda in 0.5..50.0f64, alpha in 1e-6..1e-2f64, rho in 0.0..0.9f64) {
        let c = derive_constants(&s, lambda).unwrap();
        let p1 = StepSizes { alpha, beta: 1e-3, gamma: 1e-2, lambda, iterations: 1 };
        let p2 = StepSizes { alpha: 2.0 * alpha, ..p1 };
        let d1 = potential_coefficients(&p1, &c, &s, rho, D4Variant::Printed).d;
        let d2 = potential_coefficients(&p2, &c, &s, rho, D4Variant::Printed).d;
        prop_assert_eq!(d1[0], 2.0);
        prop_assert_eq!(d2[0], 2.0);
        for j in 1..6 {
            prop_assert!((d2[j] - 2.0 * d1[j]).abs() <= 1e-12 * d2[j].abs());
        }
        // d1·β and d2·γ depend on α only.
        let p3 = StepSizes { beta: 4e-3, gamma: 3e-2, ..p1 };
        let d3 = potential_coefficients(&p3, &c, &s, rho, D4Variant::Printed).d;
        prop_assert!((d1[1] * p1.beta - d3[1] * p3.beta).abs() <= 1e-12 * (d1[1] * p1.beta).abs());
        prop_assert!((d1[2] * p1.gamma - d3[2] * p3.gamma).abs() <= 1e-12 * (d1[2] * p1.gamma).abs().max(1e-300));
    }

    #[test]
    fn floors_vanish_without_heterogeneity(s in smoothness(), lambda in 0.5..50.0f64) {
        let c = derive_constants(&s, lambda).unwrap();
        let p = StepSizes { alpha: 1e-4, beta: 1e-3, gamma: 1e-2, lambda, iterations: 1 };
        let f = error_floors(&p, &c, &s, 0.5, 0.0, 0.0);
        prop_assert_eq!(f.heterogeneity, 0.0);
        prop_assert!(f.penalty >= 0.0);
    }
}
