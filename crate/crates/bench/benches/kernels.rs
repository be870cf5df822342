use ahead_bench::{logistic, network, reference_steps};
use ahead_core::constants::StepSizes;
use ahead_core::network::{erdos_renyi, metropolis_weights};
use ahead_core::problems::{reference_synthetic, BilevelProblem};
use ahead_core::solver::{run, step, NoMonitor, RunOptions, SolverState};
use ahead_core::verification::{hypergradient, SolveOptions};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use std::hint::black_box;

fn solver(c: &mut Criterion) {
    let p = reference_synthetic();
    let w = network(10, 0.7, 42);
    let steps = reference_steps(1000);
    let state = SolverState::zeros(10, 1, 1);
    c.bench_function("synthetic_step", |b| b.iter(|| step(&p, &w, black_box(&state), &steps).unwrap()));
    c.bench_function("synthetic_run_1000", |b| {
        b.iter(|| run(&p, &w, &steps, state.clone(), RunOptions { log_every: 1000, snapshots: false }, &mut NoMonitor).unwrap())
    });

    let lg = logistic(20, 100, 10);
    let lg_state = SolverState::zeros(10, lg.outer_dim(), lg.inner_dim());
    let lg_steps = StepSizes { alpha: 0.05, beta: 5e-4, gamma: 1e-2, lambda: 10.0, iterations: 1 };
    c.bench_function("logistic_step", |b| b.iter(|| step(&lg, &w, black_box(&lg_state), &lg_steps).unwrap()));
}

fn mixing(c: &mut Criterion) {
    let mut group = c.benchmark_group("metropolis_rho");
    for m in [10, 50, 200] {
        let g = erdos_renyi(m, 0.3, 1).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(m), &g, |b, g| b.iter(|| metropolis_weights(g).unwrap().rho()));
    }
    group.finish();
}

fn hypergradients(c: &mut Criterion) {
    let p = reference_synthetic();
    let x = DVector::from_element(1, 0.7);
    c.bench_function("hypergradient_synthetic", |b| b.iter(|| hypergradient(&p, black_box(&x), &SolveOptions::default()).unwrap()));
    let lg = logistic(20, 100, 10);
    let eta = DVector::from_element(20, -1.0);
    let opts = SolveOptions::newton(1e-8);
    c.bench_function("hypergradient_logistic", |b| b.iter(|| hypergradient(&lg, black_box(&eta), &opts).unwrap()));
}

criterion_group!(benches, solver, mixing, hypergradients);
criterion_main!(benches);
