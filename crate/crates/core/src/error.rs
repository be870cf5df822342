use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error at line {line}: {msg}")]
    Data { line: usize, msg: String },

    #[error("inner objective is not strongly convex: {0}")]
    NotStronglyConvex(String),

    #[error("graph is not connected")]
    NotConnected,

    #[error("no connected graph generated within {attempts} attempts")]
    Generation { attempts: usize },

    #[error("matrix is not doubly stochastic: {0}")]
    NotDoublyStochastic(String),

    #[error("invalid network: rho = {0} must lie in [0, 1)")]
    InvalidNetwork(f64),

    #[error("oracle `{oracle}` returned a non-finite value at node {node}")]
    Oracle { node: usize, oracle: &'static str },

    #[error("iterates diverged at k = {k}: max |entry| = {max_abs:e}")]
    Diverged { k: usize, max_abs: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
