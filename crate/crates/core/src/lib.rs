//! Distributed bilevel optimization with a Hessian-free, loopless penalty method.
//!
//! * [`problems`]: oracle interface and the quadratic, logistic and min-max families.
//! * [`network`]: graphs, Metropolis mixing matrices and their spectral quantity.
//! * [`constants`]: analysis constants, step-size caps, potential weights, error floors.
//! * [`solver`]: the simultaneous three-block update and run loop.
//! * [`verification`]: reference oracles, metrics and bound checks.

// `!(v > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod error;
pub mod network;
pub mod problems;
pub mod solver;
pub mod verification;

pub use constants::{
    derive_constants, error_floors, potential_coefficients, stepsize_caps, AnalysisConstants, D4Variant, ErrorFloors,
    PotentialCoefficients, StepCaps, StepSizes,
};
pub use error::{Error, Result};
pub use network::{erdos_renyi, metropolis_weights, spectral_rho, Graph, MixingMatrix};
pub use problems::{BilevelProblem, PartialGrad, SecondOrder, SmoothnessInput};
pub use solver::{
    directions, init_state, run, step, DirectionFields, InitMode, Monitor, RunLog, RunOptions, Snapshot, SolverState,
    Termination,
};
