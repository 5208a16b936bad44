//! Risk budgeting portfolio construction.
//!
//! The risk budgeting (RB) portfolio is obtained by minimizing
//! `R(x) - lambda * sum_i b_i ln x_i` over a constraint set and tuning
//! `lambda` until the weights sum to one. Without constraints the minimizer
//! is simply rescaled.
//!
//! - [`model`]: universe, budgets and the risk measure
//! - [`prox`]: proximal operators, projections and Dykstra's algorithm
//! - [`constraints`]: the constraint set and its projection
//! - [`solvers`]: CCD, Newton, ADMM and the outer bisection
//! - [`baselines`]: least-squares and naive two-step comparators

pub mod baselines;
pub mod constraints;
pub mod error;
pub mod model;
pub mod prox;
pub mod qp;
pub mod solvers;

pub use constraints::{Atom, ConstraintSet, Separability};
pub use error::{Error, Result};
pub use model::{
    covariance, decompose, estimate_max_sharpe, risk_measure, AssetUniverse, Budgets, Portfolio,
    RiskDecomposition, RiskParams,
};
pub use solvers::{select_best, solve, Algorithm, Problem, SolveReport, SolverOptions, StartPoint};
