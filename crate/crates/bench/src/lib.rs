//! Shared fixtures for the benchmarks.

use ahead_core::constants::StepSizes;
use ahead_core::network::{erdos_renyi, metropolis_weights, MixingMatrix};
use ahead_core::problems::{generate_dataset, make_logistic_hyperopt, Dataset, LogisticHyperopt};

/// Metropolis weights of a connected Erdős–Rényi graph.
pub fn network(m: usize, p: f64, seed: u64) -> MixingMatrix {
    metropolis_weights(&erdos_renyi(m, p, seed).expect("connected graph")).expect("valid weights")
}

/// Step sizes of the reference synthetic experiment.
pub fn reference_steps(iterations: usize) -> StepSizes {
    StepSizes { alpha: 7e-4, beta: 1e-3, gamma: 1e-2, lambda: 20.0, iterations }
}

/// Logistic instance on generated two-cluster data.
pub fn logistic(n_features: usize, samples_per_node: usize, m: usize) -> LogisticHyperopt {
    let g = generate_dataset(n_features, samples_per_node, m, 4.0, 7, 0).expect("dataset");
    let data = Dataset::round_robin(g.samples, m, 2).expect("partition");
    make_logistic_hyperopt(&data, m).expect("instance")
}
