//! Second-order trajectories `Dγ'/dt = Eγ' + R − ∇V`, their energy ledger,
//! the arc-length bound chain and Finsler Euler–Lagrange flows.

pub mod chain;
pub mod energy;
pub mod finsler;
pub mod hypotheses;
pub mod problem;

pub use chain::{bound_chain, ArcLengthCheck, BoundChain, ChainInputs, InitialData};
pub use energy::{derivative_weights, energy_rate_residual};
pub use finsler::{finsler_trajectory_rhs, fundamental_tensor, solve_finsler, FinslerFlow, FinslerMetricField, FundamentalTensor};
pub use hypotheses::{
    exponential_ledger_check, verify_theorem1_hypotheses, HypothesisCheck, HypothesisMode, HypothesisReport,
};
pub use problem::{
    matrix_from_exprs, scalar_from_expr, trajectory_rhs, vector_from_exprs, GradSource, MatrixFieldFn, ScalarFieldFn,
    SpeedGauge, TrajectoryFlow, TrajectoryProblem, VectorFieldFn, ENERGY, POTENTIAL, U_METRIC,
};
