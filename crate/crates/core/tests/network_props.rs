use ahead_core::network::{erdos_renyi, metropolis_weights, spectral_rho, Graph, MixingMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Largest |eigenvalue| of a symmetric matrix by power iteration on its square.
fn power_iteration_sq(a: &DMatrix<f64>) -> f64 {
    let m = a.nrows();
    let sq = a * a;
    let mut v = DMatrix::from_fn(m, 1, |i, _| 1.0 + (i as f64 * 0.37).sin());
    let mut est = 0.0;
    for _ in 0..5000 {
        let w = &sq * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        est = norm / v.norm();
        v = w / norm;
    }
    est
}

fn centered(w: &DMatrix<f64>) -> DMatrix<f64> {
    let m = w.nrows();
    w.map(|v| v - 1.0 / m as f64)
}

#[test]
fn four_cycle_matches_power_iteration() {
    let mm = metropolis_weights(&Graph::ring(4)).unwrap();
    let independent = power_iteration_sq(&centered(mm.weights()));
    assert!((independent - 1.0 / 9.0).abs() < 1e-12);
    assert!((mm.rho() - independent).abs() < 1e-12);
}

#[test]
fn complete_graph_is_optimal() {
    let complete = metropolis_weights(&Graph::complete(7)).unwrap().rho();
    assert!(complete.abs() < 1e-12);
    for seed in 0..20 {
        let rho = metropolis_weights(&erdos_renyi(7, 0.4, seed).unwrap()).unwrap().rho();
        assert!(complete <= rho + 1e-12);
    }
}

#[test]
fn spectral_rho_agrees_with_power_iteration_on_random_graphs() {
    for seed in 0..10 {
        let mm = metropolis_weights(&erdos_renyi(9, 0.35, seed).unwrap()).unwrap();
        let independent = power_iteration_sq(&centered(mm.weights()));
        assert!((mm.rho() - independent).abs() < 1e-9, "seed {seed}: {} vs {independent}", mm.rho());
    }
}

#[test]
fn exported_matrix_parses_back() {
    let mm = metropolis_weights(&erdos_renyi(6, 0.5, 3).unwrap()).unwrap();
    let mut buf = Vec::new();
    mm.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let parsed = DMatrix::from_fn(6, 6, |i, j| rows[i][j]);
    assert_eq!(&parsed, mm.weights());
    assert_eq!(MixingMatrix::from_weights(parsed).unwrap().rho(), mm.rho());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metropolis_matrices_are_valid(m in 2usize..=20, p in 0.2..1.0f64, seed in any::<u64>()) {
        let g = erdos_renyi(m, p, seed).unwrap();
        prop_assert!(g.is_connected());
        let mm = metropolis_weights(&g).unwrap();
        let w = mm.weights();
        for i in 0..m {
            prop_assert!((w.row(i).sum() - 1.0).abs() <= 1e-12);
            prop_assert!((w.column(i).sum() - 1.0).abs() <= 1e-12);
            for j in 0..m {
                prop_assert_eq!(w[(i, j)], w[(j, i)]);
                prop_assert!(w[(i, j)] >= 0.0);
                prop_assert_eq!(w[(i, j)] > 0.0, i == j || g.has_edge(i, j));
            }
        }
        prop_assert!((0.0..1.0).contains(&mm.rho()));
        prop_assert_eq!(spectral_rho(w).unwrap(), mm.rho());
    }

    #[test]
    fn mixing_contracts_zero_mean_blocks(
        seed in any::<u64>(),
        raw in prop::collection::vec(-5.0..5.0f64, 12 * 3),
    ) {
        let mm = metropolis_weights(&erdos_renyi(12, 0.3, seed).unwrap()).unwrap();
        let v = DMatrix::from_row_slice(12, 3, &raw);
        let mean = v.row_mean();
        let zero_mean = DMatrix::from_fn(12, 3, |i, j| v[(i, j)] - mean[j]);
        let mixed = mm.weights() * &zero_mean;
        prop_assert!(mixed.norm_squared() <= mm.rho() * zero_mean.norm_squared() * (1.0 + 1e-12) + 1e-24);
    }

    #[test]
    fn edge_lists_round_trip(m in 2usize..15, seed in any::<u64>()) {
        let g = erdos_renyi(m, 0.5, seed).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        prop_assert_eq!(Graph::read_edge_list(&buf[..]).unwrap(), g);
    }
}
