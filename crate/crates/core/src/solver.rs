//! The loopless first-order update over a network.
//!
//! Each node keeps three iterates: the outer variable `x_i`, the penalized
//! inner variable `y_i` and the auxiliary inner variable `z_i`. One step
//! evaluates every direction at the incoming iterate and then applies
//!
//! ```text
//! z' = W z − γ h_z,   h_z = ∇_y g_i(x_i, z_i)
//! y' = W y − β h_y,   h_y = ∇_y f_i(x_i, y_i) + λ ∇_y g_i(x_i, y_i)
//! x' = W x − α h_x,   h_x = ∇_x f_i(x_i, y_i) + λ (∇_x g_i(x_i, y_i) − ∇_x g_i(x_i, z_i))
//! ```
//!
//! No second-order oracle is used.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constants::StepSizes;
use crate::error::{Error, Result};
use crate::network::MixingMatrix;
use crate::problems::BilevelProblem;

/// Entries above this magnitude are treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Stacked per-node iterates; row `i` belongs to node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub k: usize,
}

/// Network mean of the rows of a stacked block.
pub fn row_mean(block: &DMatrix<f64>) -> DVector<f64> {
    block.row_mean().transpose()
}

/// `(1/m) ‖block − 1 ⊗ mean‖²`.
pub fn consensus_sq(block: &DMatrix<f64>) -> f64 {
    let m = block.nrows();
    if m == 0 {
        return 0.0;
    }
    let mean = block.row_mean();
    block.row_iter().map(|r| (r - &mean).norm_squared()).sum::<f64>() / m as f64
}

impl SolverState {
    pub fn zeros(m: usize, n: usize, r: usize) -> Self {
        Self { x: DMatrix::zeros(m, n), y: DMatrix::zeros(m, r), z: DMatrix::zeros(m, r), k: 0 }
    }

    /// Every node holds the same `(x, y, z)`.
    pub fn consensus(m: usize, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> Self {
        let rep = |v: &DVector<f64>| DMatrix::from_fn(m, v.len(), |_, j| v[j]);
        Self { x: rep(x), y: rep(y), z: rep(z), k: 0 }
    }

    pub fn nodes(&self) -> usize {
        self.x.nrows()
    }

    pub fn x_bar(&self) -> DVector<f64> {
        row_mean(&self.x)
    }

    pub fn y_bar(&self) -> DVector<f64> {
        row_mean(&self.y)
    }

    pub fn z_bar(&self) -> DVector<f64> {
        row_mean(&self.z)
    }

    /// Consensus errors of the `x`, `y` and `z` blocks.
    pub fn consensus_errors(&self) -> [f64; 3] {
        [consensus_sq(&self.x), consensus_sq(&self.y), consensus_sq(&self.z)]
    }

    /// Largest entry magnitude, or infinity if any entry is not finite.
    pub fn max_abs(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for v in self.x.iter().chain(self.y.iter()).chain(self.z.iter()) {
            if !v.is_finite() {
                return f64::INFINITY;
            }
            worst = worst.max(v.abs());
        }
        worst
    }

    fn check_shape<P: BilevelProblem + ?Sized>(&self, problem: &P) -> Result<()> {
        let (m, n, r) = (problem.nodes(), problem.outer_dim(), problem.inner_dim());
        let ok = self.x.shape() == (m, n) && self.y.shape() == (m, r) && self.z.shape() == (m, r);
        if !ok {
            return Err(Error::Config(format!(
                "state shapes x {:?}, y {:?}, z {:?} do not match m={m}, n={n}, r={r}",
                self.x.shape(),
                self.y.shape(),
                self.z.shape()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    #[default]
    Zeros,
    /// Independent uniform entries in `[−1, 1]`.
    Random,
    /// One uniform vector per block, replicated to every node.
    ConsensusRandom,
}

impl std::str::FromStr for InitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zeros" => Ok(Self::Zeros),
            "random" => Ok(Self::Random),
            "consensus-random" => Ok(Self::ConsensusRandom),
            other => Err(Error::Config(format!(
                "unknown init mode {other:?} (expected zeros, random or consensus-random)"
            ))),
        }
    }
}

impl std::fmt::Display for InitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Zeros => "zeros",
            Self::Random => "random",
            Self::ConsensusRandom => "consensus-random",
        })
    }
}

pub fn init_state<P: BilevelProblem + ?Sized>(
    problem: &P,
    network: &MixingMatrix,
    mode: InitMode,
    seed: u64,
) -> Result<SolverState> {
    let (m, n, r) = (problem.nodes(), problem.outer_dim(), problem.inner_dim());
    if network.nodes() != m {
        return Err(Error::Config(format!("problem has {m} nodes but the network has {}", network.nodes())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |rows: usize, cols: usize| DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0));
    Ok(match mode {
        InitMode::Zeros => SolverState::zeros(m, n, r),
        InitMode::Random => SolverState { x: uniform(m, n), y: uniform(m, r), z: uniform(m, r), k: 0 },
        InitMode::ConsensusRandom => {
            let x = uniform(1, n).row(0).transpose();
            let y = uniform(1, r).row(0).transpose();
            let z = uniform(1, r).row(0).transpose();
            SolverState::consensus(m, &x, &y, &z)
        }
    })
}

/// Stacked update directions; row `i` belongs to node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionFields {
    pub h_x: DMatrix<f64>,
    pub h_y: DMatrix<f64>,
    pub h_z: DMatrix<f64>,
}

impl DirectionFields {
    pub fn hx_bar(&self) -> DVector<f64> {
        row_mean(&self.h_x)
    }
}

fn finite(node: usize, oracle: &'static str, v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|e| e.is_finite()) {
        Ok(())
    } else {
        Err(Error::Oracle { node, oracle })
    }
}

/// Directions at the current iterate. Nodes are visited in index order.
pub fn directions<P: BilevelProblem + ?Sized>(problem: &P, state: &SolverState, lambda: f64) -> Result<DirectionFields> {
    state.check_shape(problem)?;
    let (m, n, r) = (problem.nodes(), problem.outer_dim(), problem.inner_dim());
    let mut h_x = DMatrix::zeros(m, n);
    let mut h_y = DMatrix::zeros(m, r);
    let mut h_z = DMatrix::zeros(m, r);
    for i in 0..m {
        let xi = state.x.row(i).transpose();
        let yi = state.y.row(i).transpose();
        let zi = state.z.row(i).transpose();
        let fy = problem.outer_grad(i, &xi, &yi);
        let gy = problem.inner_grad(i, &xi, &yi);
        let gz = problem.inner_grad(i, &xi, &zi);
        finite(i, "outer_grad", &fy.x)?;
        finite(i, "outer_grad", &fy.y)?;
        finite(i, "inner_grad", &gy.x)?;
        finite(i, "inner_grad", &gy.y)?;
        finite(i, "inner_grad", &gz.x)?;
        finite(i, "inner_grad", &gz.y)?;
        let hx = fy.x + (gy.x - gz.x) * lambda;
        let hy = fy.y + gy.y * lambda;
        h_x.set_row(i, &hx.transpose());
        h_y.set_row(i, &hy.transpose());
        h_z.set_row(i, &gz.y.transpose());
    }
    Ok(DirectionFields { h_x, h_y, h_z })
}

/// Applies one mixing round and the descent steps with precomputed directions.
pub fn apply(network: &MixingMatrix, state: &SolverState, dirs: &DirectionFields, p: &StepSizes) -> Result<SolverState> {
    let w = network.weights();
    let next = SolverState {
        x: w * &state.x - &dirs.h_x * p.alpha,
        y: w * &state.y - &dirs.h_y * p.beta,
        z: w * &state.z - &dirs.h_z * p.gamma,
        k: state.k + 1,
    };
    let max_abs = next.max_abs();
    if !(max_abs <= DIVERGENCE_LIMIT) {
        return Err(Error::Diverged { k: next.k, max_abs });
    }
    Ok(next)
}

pub fn step<P: BilevelProblem + ?Sized>(
    problem: &P,
    network: &MixingMatrix,
    state: &SolverState,
    p: &StepSizes,
) -> Result<SolverState> {
    let dirs = directions(problem, state, p.lambda)?;
    apply(network, state, &dirs, p)
}

/// Observer invoked at logged iterations with the state and its directions.
pub trait Monitor {
    type Record;
    fn observe(&mut self, state: &SolverState, dirs: &DirectionFields) -> Self::Record;
}

impl<R, F: FnMut(&SolverState, &DirectionFields) -> R> Monitor for F {
    type Record = R;
    fn observe(&mut self, state: &SolverState, dirs: &DirectionFields) -> R {
        self(state, dirs)
    }
}

/// A monitor that records nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoMonitor;

impl Monitor for NoMonitor {
    type Record = ();
    fn observe(&mut self, _: &SolverState, _: &DirectionFields) {}
}

/// Network means at a logged iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub k: usize,
    pub x_bar: DVector<f64>,
    pub y_bar: DVector<f64>,
    pub z_bar: DVector<f64>,
    pub hx_bar: DVector<f64>,
    /// Consensus errors of the `x`, `y` and `z` blocks.
    pub consensus: [f64; 3],
}

impl Snapshot {
    pub fn of(state: &SolverState, dirs: &DirectionFields) -> Self {
        Self {
            k: state.k,
            x_bar: state.x_bar(),
            y_bar: state.y_bar(),
            z_bar: state.z_bar(),
            hx_bar: dirs.hx_bar(),
            consensus: state.consensus_errors(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Log every this many iterations; `k = 0` and the last iterate are always logged.
    pub log_every: usize,
    pub snapshots: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { log_every: 1, snapshots: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    Diverged { k: usize, max_abs: f64 },
}

#[derive(Debug, Clone)]
pub struct RunLog<R> {
    pub records: Vec<R>,
    pub snapshots: Vec<Snapshot>,
    /// Last finite state reached.
    pub final_state: SolverState,
    pub termination: Termination,
}

impl<R> RunLog<R> {
    pub fn diverged(&self) -> bool {
        matches!(self.termination, Termination::Diverged { .. })
    }
}

/// Runs `p.iterations` steps from `init`.
///
/// Divergence stops the run and is reported in [`RunLog::termination`] with
/// the records gathered so far. Oracle failures and shape mismatches are errors.
pub fn run<P, M>(
    problem: &P,
    network: &MixingMatrix,
    p: &StepSizes,
    init: SolverState,
    opts: RunOptions,
    monitor: &mut M,
) -> Result<RunLog<M::Record>>
where
    P: BilevelProblem + ?Sized,
    M: Monitor,
{
    p.validate()?;
    if opts.log_every == 0 {
        return Err(Error::Config("log interval must be at least 1".into()));
    }
    if network.nodes() != problem.nodes() {
        return Err(Error::Config(format!(
            "problem has {} nodes but the network has {}",
            problem.nodes(),
            network.nodes()
        )));
    }
    let start = init.k;
    let end = start + p.iterations;
    let mut log = RunLog { records: Vec::new(), snapshots: Vec::new(), final_state: init, termination: Termination::Completed };
    loop {
        let state = &log.final_state;
        let dirs = directions(problem, state, p.lambda)?;
        let k = state.k;
        if (k - start).is_multiple_of(opts.log_every) || k == end {
            if opts.snapshots {
                log.snapshots.push(Snapshot::of(state, &dirs));
            }
            log.records.push(monitor.observe(state, &dirs));
        }
        if k == end {
            break;
        }
        match apply(network, state, &dirs, p) {
            Ok(next) => log.final_state = next,
            Err(Error::Diverged { k, max_abs }) => {
                log.termination = Termination::Diverged { k, max_abs };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(log)
}
