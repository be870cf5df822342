//! Problems and networks built from a configuration.

use ahead_core::network::{erdos_renyi, metropolis_weights, Graph, MixingMatrix};
use ahead_core::problems::{
    generate_dataset, make_logistic_hyperopt, make_minmax, make_synthetic_quadratic, reference_synthetic, BilevelProblem,
    Dataset, LogisticHyperopt, MinMax, PartitionMode, QuadraticSaddle, Sample, SyntheticQuadratic,
};
use nalgebra::DVector;

use crate::config::{ExperimentConfig, Family, NetworkModel, Partition};
use crate::error::{CliError, Result};

pub enum Instance {
    Synthetic(SyntheticQuadratic),
    Logistic {
        problem: LogisticHyperopt,
        /// Held-out samples, empty when none were configured.
        test: Vec<Sample>,
    },
    Minmax(MinMax<QuadraticSaddle>),
}

impl Instance {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let p = &cfg.problem;
        let m = cfg.network.m;
        Ok(match p.family {
            Family::Synthetic => match (&p.a, &p.b, &p.c, &p.d, &p.e) {
                (Some(a), Some(b), Some(c), Some(d), Some(e)) => {
                    Self::Synthetic(make_synthetic_quadratic(a.clone(), b.clone(), c.clone(), d.clone(), e.clone())?)
                }
                _ => Self::Synthetic(reference_synthetic()),
            },
            Family::Logistic => {
                let (data, mut test) = match &p.data {
                    Some(path) => {
                        let mode = match p.partition.unwrap_or(Partition::RoundRobin) {
                            Partition::RoundRobin => PartitionMode::RoundRobin { val_every: p.val_every.unwrap_or(2) },
                            Partition::Column => PartitionMode::Column,
                        };
                        let data = Dataset::read_path(path, m, mode, b',').map_err(|e| CliError::Artifact {
                            path: path.clone(),
                            msg: e.to_string(),
                        })?;
                        (data, Vec::new())
                    }
                    None => {
                        let g = generate_dataset(
                            p.n_features.unwrap_or(0),
                            p.samples_per_node.unwrap_or(0),
                            m,
                            p.separation.unwrap_or(0.0),
                            p.data_seed.unwrap_or(0),
                            p.test_samples.unwrap_or(0),
                        )?;
                        (Dataset::round_robin(g.samples, m, p.val_every.unwrap_or(2))?, g.test)
                    }
                };
                if let Some(path) = &p.test_data {
                    let read = Dataset::read_path(path, 1, PartitionMode::RoundRobin { val_every: 2 }, b',')
                        .map_err(|e| CliError::Artifact { path: path.clone(), msg: e.to_string() })?;
                    test = read.samples().to_vec();
                }
                let problem = make_logistic_hyperopt(&data, m)?;
                let problem = match p.eta_box {
                    Some([lo, hi]) => {
                        let s = problem.box_smoothness(lo, hi);
                        problem.with_smoothness(s)
                    }
                    None => problem,
                };
                Self::Logistic { problem, test }
            }
            Family::Minmax => {
                let saddle = if p.bilinear == Some(true) {
                    QuadraticSaddle::bilinear(m)
                } else {
                    QuadraticSaddle::random(
                        m,
                        p.outer_dim.unwrap_or(1),
                        p.inner_dim.unwrap_or(1),
                        p.instance_seed.unwrap_or(0),
                    )
                };
                Self::Minmax(make_minmax(saddle))
            }
        })
    }

    pub fn problem(&self) -> &dyn BilevelProblem {
        match self {
            Self::Synthetic(p) => p,
            Self::Logistic { problem, .. } => problem,
            Self::Minmax(p) => p,
        }
    }

    /// Held-out accuracy of the linear classifier `w`, for the logistic family.
    pub fn test_accuracy(&self, w: &DVector<f64>) -> Option<f64> {
        match self {
            Self::Logistic { test, .. } if !test.is_empty() => Some(LogisticHyperopt::accuracy(test, w)),
            _ => None,
        }
    }
}

pub fn build_graph(cfg: &ExperimentConfig) -> Result<Graph> {
    let n = &cfg.network;
    let graph = match n.model {
        NetworkModel::ErdosRenyi => erdos_renyi(n.m, n.p.unwrap_or(1.0), n.seed)?,
        NetworkModel::Ring => Graph::ring(n.m),
        NetworkModel::Complete => Graph::complete(n.m),
        NetworkModel::Path => Graph::path(n.m),
        NetworkModel::Star => Graph::star(n.m),
        NetworkModel::File => {
            let path = n.edges.as_ref().expect("validated configuration");
            let file = std::fs::File::open(path).map_err(CliError::io(path))?;
            let g = Graph::read_edge_list(std::io::BufReader::new(file))
                .map_err(|e| CliError::Artifact { path: path.clone(), msg: e.to_string() })?;
            if g.nodes() != n.m {
                return Err(CliError::Artifact {
                    path: path.clone(),
                    msg: format!("edge list has {} nodes but the config says m = {}", g.nodes(), n.m),
                });
            }
            g
        }
    };
    Ok(graph)
}

pub fn build_network(cfg: &ExperimentConfig) -> Result<(Graph, MixingMatrix)> {
    let graph = build_graph(cfg)?;
    let w = metropolis_weights(&graph)?;
    Ok((graph, w))
}
