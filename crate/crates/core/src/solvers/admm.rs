//! ADMM for the barrier problem over a coupled constraint set.
//!
//! Two splittings are available. With the barrier in `f`, the x-update is a
//! penalized barrier problem (Newton or coordinate descent) and the z-update
//! a projection onto `Omega`. With the barrier in `g`, the x-update is a
//! quadratic program over `Omega` and the z-update the log-barrier prox; this
//! form works on the variance `1/2 x' Sigma x` and needs `mu = r`.

use nalgebra::{DMatrix, DVector};

use super::ccd::{self, CcdOptions};
use super::newton::{self, NewtonOptions};
use super::objective::Barrier;
use crate::constraints::ConstraintSet;
use crate::error::{check_len, Error, Result};
use crate::model::{AssetUniverse, Budgets, RiskParams};
use crate::prox::{prox_log_barrier, DykstraOptions};
use crate::qp::DenseQp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum XUpdate {
    Newton,
    Ccd,
    Qp,
}

/// Where the log barrier sits in the `f + g` splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    BarrierInF,
    BarrierInG,
}

impl XUpdate {
    pub fn split(self) -> Split {
        match self {
            XUpdate::Qp => Split::BarrierInG,
            XUpdate::Newton | XUpdate::Ccd => Split::BarrierInF,
        }
    }
}

/// Residual balancing: keep `||r||^2` and `||s||^2` within a factor `mu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptivePenalty {
    pub mu: f64,
    pub tau: f64,
    pub tau_prime: f64,
}

impl Default for AdaptivePenalty {
    fn default() -> Self {
        Self {
            mu: 1e6,
            tau: 2.0,
            tau_prime: 2.0,
        }
    }
}

/// Returns the updated `(phi, u)` given the primal and dual residual norms.
pub fn adaptive_penalty(
    r_norm: f64,
    s_norm: f64,
    phi: f64,
    u: &DVector<f64>,
    rule: &AdaptivePenalty,
) -> (f64, DVector<f64>) {
    let (r2, s2) = (r_norm * r_norm, s_norm * s_norm);
    if r2 > rule.mu * s2 {
        (phi * rule.tau, u / rule.tau)
    } else if s2 > rule.mu * r2 {
        (phi / rule.tau_prime, u * rule.tau_prime)
    } else {
        (phi, u.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmOptions {
    /// Bound on both `||x - z||` and `phi ||z - z_prev||`.
    pub tol: f64,
    /// Tolerance of the inner x-update.
    pub inner_tol: f64,
    pub max_iter: usize,
    pub phi0: f64,
    pub adaptive: Option<AdaptivePenalty>,
    pub dykstra: DykstraOptions,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            inner_tol: 1e-12,
            max_iter: 20_000,
            phi0: 1.0,
            adaptive: Some(AdaptivePenalty::default()),
            dykstra: DykstraOptions::default(),
        }
    }
}

/// Iterates carried between ADMM runs.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub u: DVector<f64>,
    pub phi: f64,
    qp: Option<(f64, DenseQp)>,
    qp_active: Vec<(usize, f64)>,
}

impl AdmmState {
    pub fn new(x0: DVector<f64>, phi: f64) -> Self {
        let n = x0.len();
        Self {
            z: x0.clone(),
            x: x0,
            u: DVector::zeros(n),
            phi,
            qp: None,
            qp_active: Vec::new(),
        }
    }

    /// Restarts from `x0` while keeping the cached QP factorization.
    pub fn reset(&mut self, x0: &DVector<f64>, phi: f64) {
        self.x = x0.clone();
        self.z = x0.clone();
        self.u = DVector::zeros(x0.len());
        self.phi = phi;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmSolution {
    /// The iterate lying in `Omega`: `z` for the barrier-in-f split, `x` otherwise.
    pub x: DVector<f64>,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub phi: f64,
}

/// Runs ADMM from `state` for a fixed `lambda`.
///
/// For [`XUpdate::Qp`] the barrier weight `lambda` multiplies the variance
/// form `1/2 x' Sigma x - lambda sum b_i ln x_i`.
#[allow(clippy::too_many_arguments)]
pub fn admm(
    universe: &AssetUniverse,
    params: &RiskParams,
    budgets: &Budgets,
    lambda: f64,
    omega: &ConstraintSet,
    x_update: XUpdate,
    options: &AdmmOptions,
    state: &mut AdmmState,
) -> Result<AdmmSolution> {
    let n = universe.len();
    check_len("budgets", n, budgets.len())?;
    check_len("constraint set", n, omega.dim())?;
    check_len("ADMM state", n, state.x.len())?;
    if !(lambda > 0.0) || !(state.phi > 0.0) {
        return Err(Error::InvalidOptions("lambda and phi must be positive".into()));
    }
    if x_update == XUpdate::Qp && universe.has_excess_returns() {
        return Err(Error::InvalidOptions(
            "the QP x-update needs expected returns equal to the risk-free rate".into(),
        ));
    }
    let b = budgets.as_vector();
    let mut inner_iterations = 0;
    let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);

    for k in 1..=options.max_iter {
        let z_prev = state.z.clone();
        match x_update {
            XUpdate::Ccd | XUpdate::Newton => {
                let v = &state.z - &state.u;
                let f = Barrier::new(universe, params, b, lambda).with_penalty(state.phi, &v);
                inner_iterations += if x_update == XUpdate::Ccd {
                    let ccd_options = CcdOptions {
                        tol: options.inner_tol,
                        max_sweeps: options.max_iter,
                    };
                    ccd::sweeps(&f, None, &mut state.x, &ccd_options, "admm ccd x-update")?
                } else {
                    let newton_options = NewtonOptions {
                        tol: options.inner_tol,
                        ..NewtonOptions::default()
                    };
                    newton::minimize(&f, &mut state.x, &newton_options)?
                };
                state.z = omega.project_with(&(&state.x + &state.u), &options.dykstra)?;
            }
            XUpdate::Qp => {
                let linear = (&state.z - &state.u) * (-state.phi);
                let guess = std::mem::take(&mut state.qp_active);
                let sol = qp_for(state, universe, omega)?.solve_warm(&linear, &guess)?;
                inner_iterations += sol.iterations;
                state.x = sol.x;
                state.qp_active = sol.active;
                state.z = prox_log_barrier(&(&state.x + &state.u), lambda, b, state.phi);
            }
        }
        let r = &state.x - &state.z;
        state.u += &r;
        r_norm = r.norm();
        s_norm = state.phi * (&state.z - &z_prev).norm();
        if r_norm <= options.tol && s_norm <= options.tol {
            let x = match x_update.split() {
                Split::BarrierInF => state.z.clone(),
                Split::BarrierInG => state.x.clone(),
            };
            return Ok(AdmmSolution {
                x,
                iterations: k,
                inner_iterations,
                primal_residual: r_norm,
                dual_residual: s_norm,
                phi: state.phi,
            });
        }
        // an exactly zero residual carries no scale information
        if let (Some(rule), true) = (&options.adaptive, r_norm > 0.0 && s_norm > 0.0) {
            let (phi, u) = adaptive_penalty(r_norm, s_norm, state.phi, &state.u, rule);
            state.phi = phi;
            state.u = u;
        }
    }
    Err(Error::NonConvergence {
        stage: "admm",
        iterations: options.max_iter,
        residual: r_norm.max(s_norm),
        last_iterate: state.z.iter().copied().collect(),
    })
}

fn qp_for<'s>(state: &'s mut AdmmState, universe: &AssetUniverse, omega: &ConstraintSet) -> Result<&'s DenseQp> {
    let stale = state.qp.as_ref().map_or(true, |(phi, _)| *phi != state.phi);
    if stale {
        let n = universe.len();
        let g = universe.covariance() + DMatrix::identity(n, n) * state.phi;
        let qp = DenseQp::new(g, &omega.linear_constraints()?)?;
        state.qp = Some((state.phi, qp));
    }
    Ok(&state.qp.as_ref().expect("factorization cached above").1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_rule_cases() {
        let rule = AdaptivePenalty::default();
        let u = DVector::from_vec(vec![1.0, -2.0]);
        assert_eq!(adaptive_penalty(1.0, 1.0, 0.5, &u, &rule), (0.5, u.clone()));
        let (phi, v) = adaptive_penalty(2e6f64.sqrt(), 1.0, 0.5, &u, &rule);
        assert_eq!(phi, 1.0);
        assert_eq!(v, DVector::from_vec(vec![0.5, -1.0]));
        let (phi, v) = adaptive_penalty(1.0, 2e6f64.sqrt(), 0.5, &u, &rule);
        assert_eq!(phi, 0.25);
        assert_eq!(v, DVector::from_vec(vec![2.0, -4.0]));
    }
}
