//! Damped Newton iterations on the barrier problem.

use nalgebra::DVector;

use super::objective::Barrier;
use super::InnerSolution;
use crate::error::{check_len, Error, Result};
use crate::model::{AssetUniverse, Budgets, RiskParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Bound on the Euclidean length of an accepted step.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
        }
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

pub(crate) fn minimize(f: &Barrier<'_>, x: &mut DVector<f64>, options: &NewtonOptions) -> Result<usize> {
    let mut last_step = f64::INFINITY;
    for iter in 1..=options.max_iter {
        let g = f.gradient(x);
        let direction = match f.hessian(x).cholesky() {
            Some(chol) => -chol.solve(&g),
            None => -&g,
        };
        let slope = g.dot(&direction);
        let fx = f.value(x);
        if -slope <= 1e-30 * (1.0 + fx.abs()) {
            return Ok(iter);
        }
        let mut t = 1.0;
        while (0..x.len()).any(|i| x[i] + t * direction[i] <= 0.0) {
            t *= 0.5;
        }
        // below this predicted decrease the Armijo test drowns in rounding;
        // the iterate is in the quadratic region, so take the step as is
        let tiny = -slope <= 1e-10 * (1.0 + fx.abs());
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let candidate = &*x + &direction * t;
            if tiny || f.value(&candidate) <= fx + ARMIJO * t * slope {
                last_step = t * direction.norm();
                *x = candidate;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        if last_step <= options.tol {
            return Ok(iter);
        }
    }
    Err(Error::NonConvergence {
        stage: "newton",
        iterations: options.max_iter,
        residual: last_step,
        last_iterate: x.iter().copied().collect(),
    })
}

/// Newton counterpart of [`super::ccd::ccd_unconstrained`].
pub fn newton_unconstrained(
    universe: &AssetUniverse,
    params: &RiskParams,
    budgets: &Budgets,
    lambda: f64,
    x_init: &DVector<f64>,
    options: &NewtonOptions,
) -> Result<InnerSolution> {
    check_len("budgets", universe.len(), budgets.len())?;
    check_len("starting point", universe.len(), x_init.len())?;
    if x_init.iter().any(|&v| !(v > 0.0)) || !(lambda > 0.0) {
        return Err(Error::InvalidOptions(
            "starting point and lambda must be strictly positive".into(),
        ));
    }
    let f = Barrier::new(universe, params, budgets.as_vector(), lambda);
    let mut x = x_init.clone();
    let iterations = minimize(&f, &mut x, options)?;
    Ok(InnerSolution { x, iterations })
}
