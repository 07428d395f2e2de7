//! Budget-constrained discriminate pricing between energy users and a
//! shared facility controller.
//!
//! Each user picks a unit price for its surplus energy; the controller's
//! budget couples those choices. The resulting game is a strongly monotone
//! variational inequality whose unique solution divides the whole budget,
//! maximizes total benefit and is Pareto optimal.
//!
//! Core types are generic over the scalar (`f32` or `f64`); the aliases at
//! the crate root fix `f64`.

// `!(x > 0)` is how parameters reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod market;
pub mod oracle;
mod projection;
pub mod scalar;
pub mod sim;
pub mod solver;
pub mod vi;

pub use error::{Error, Result};
pub use market::{
    benefit, marginal_benefit, price_cap_bound, revenue, social_welfare, Allocation, EnergyUser,
    MarketConfig, PriceVector,
};
pub use oracle::{brute_force_welfare, kkt_residual, pareto_check, tau_solve, KKTSolution};
pub use scalar::Scalar;
pub use solver::{
    hyperplane_from, iterate, line_search, natural_residual, solve, solve_with, DirectOperator,
    OperatorSource, Solution, SolveError, SolveTrace, SolverParams,
};
pub use vi::{
    eval_operator, monotonicity_modulus, project_feasible, project_feasible_cap_halfspace, CutProjection,
    FeasibleSet, HalfSpace, VIProblem,
};

pub type EnergyUser64 = EnergyUser<f64>;
pub type MarketConfig64 = MarketConfig<f64>;
pub type PriceVector64 = PriceVector<f64>;
pub type Allocation64 = Allocation<f64>;
pub type Problem64 = VIProblem<f64>;
pub type SolverParams64 = SolverParams<f64>;
pub type Solution64 = Solution<f64>;
pub type Problem32 = VIProblem<f32>;
pub type SolverParams32 = SolverParams<f32>;
