//! Cyclical coordinate descent on the barrier problem.
//!
//! Each coordinate solves `alpha x^2 + beta x + gamma = 0` with the portfolio
//! volatility frozen at its current value, then clamps to the box. `Sigma x`
//! and `x' Sigma x` are updated incrementally so a sweep costs `O(n^2)`.

use nalgebra::DVector;

use super::objective::Barrier;
use super::InnerSolution;
use crate::error::{check_len, Error, Result};
use crate::model::{AssetUniverse, Budgets, RiskParams};

/// Stopping rule shared by the coordinate loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcdOptions {
    /// Bound on the Euclidean displacement of one full sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for CcdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 20_000,
        }
    }
}

/// Positive root of `alpha x^2 + beta x + gamma = 0` for `alpha > 0`, `gamma <= 0`.
fn positive_root(alpha: f64, beta: f64, gamma: f64) -> f64 {
    let disc = (beta * beta - 4.0 * alpha * gamma).max(0.0).sqrt();
    if beta > 0.0 {
        -2.0 * gamma / (beta + disc)
    } else {
        (disc - beta) / (2.0 * alpha)
    }
}

pub(crate) fn sweeps(
    f: &Barrier<'_>,
    bounds: Option<(&DVector<f64>, &DVector<f64>)>,
    x: &mut DVector<f64>,
    options: &CcdOptions,
    stage: &'static str,
) -> Result<usize> {
    let n = f.len();
    let mut displacement = f64::INFINITY;
    for sweep in 1..=options.max_sweeps {
        let mut sx = f.cov * &*x;
        let mut var = x.dot(&sx);
        let mut moved = 0.0;
        for i in 0..n {
            let sii = f.cov[(i, i)];
            let vol = var.max(0.0).sqrt();
            let rest = sx[i] - sii * x[i];
            let (phi, vi) = f.penalty.map_or((0.0, 0.0), |(phi, v)| (phi, v[i]));
            let alpha = f.c * sii + phi * vol;
            let beta = f.c * rest - (f.excess[i] + phi * vi) * vol;
            let gamma = -f.lambda * f.b[i] * vol;
            let mut xi = positive_root(alpha, beta, gamma);
            if let Some((lo, hi)) = bounds {
                xi = xi.max(lo[i]).min(hi[i]);
            }
            let delta = xi - x[i];
            if delta != 0.0 {
                var += delta * (2.0 * sx[i] + delta * sii);
                sx.axpy(delta, &f.cov.column(i), 1.0);
                x[i] = xi;
                moved += delta * delta;
            }
        }
        if !x.iter().all(|v| v.is_finite()) {
            break;
        }
        displacement = moved.sqrt();
        if displacement <= options.tol {
            return Ok(sweep);
        }
    }
    Err(Error::NonConvergence {
        stage,
        iterations: options.max_sweeps,
        residual: displacement,
        last_iterate: x.iter().copied().collect(),
    })
}

fn check_start(universe: &AssetUniverse, budgets: &Budgets, lambda: f64, x_init: &DVector<f64>) -> Result<()> {
    check_len("budgets", universe.len(), budgets.len())?;
    check_len("starting point", universe.len(), x_init.len())?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidOptions(format!("lambda must be positive, got {lambda}")));
    }
    if x_init.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidOptions("starting point must be strictly positive".into()));
    }
    Ok(())
}

/// Minimizer of `R(x) - lambda sum b_i ln x_i` over the positive orthant.
pub fn ccd_unconstrained(
    universe: &AssetUniverse,
    params: &RiskParams,
    budgets: &Budgets,
    lambda: f64,
    x_init: &DVector<f64>,
    options: &CcdOptions,
) -> Result<InnerSolution> {
    check_start(universe, budgets, lambda, x_init)?;
    let f = Barrier::new(universe, params, budgets.as_vector(), lambda);
    let mut x = x_init.clone();
    let iterations = sweeps(&f, None, &mut x, options, "ccd")?;
    Ok(InnerSolution { x, iterations })
}

/// Coordinate descent with a clamp to `[lo, hi]` after every coordinate update.
pub fn ccd_separable(
    universe: &AssetUniverse,
    params: &RiskParams,
    budgets: &Budgets,
    lambda: f64,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    x_init: &DVector<f64>,
    options: &CcdOptions,
) -> Result<InnerSolution> {
    check_start(universe, budgets, lambda, x_init)?;
    check_len("lower bounds", universe.len(), lo.len())?;
    check_len("upper bounds", universe.len(), hi.len())?;
    crate::prox::validate_box(lo, hi)?;
    if let Some(i) = hi.iter().position(|&h| h <= 0.0) {
        return Err(Error::InvalidBounds {
            index: i,
            lower: lo[i],
            upper: hi[i],
        });
    }
    let f = Barrier::new(universe, params, budgets.as_vector(), lambda);
    let mut x = x_init.clone();
    let iterations = sweeps(&f, Some((lo, hi)), &mut x, options, "ccd separable")?;
    Ok(InnerSolution { x, iterations })
}

/// Partial derivative of the barrier objective with respect to `x_i`.
pub fn coordinate_gradient(
    universe: &AssetUniverse,
    params: &RiskParams,
    budgets: &Budgets,
    lambda: f64,
    x: &DVector<f64>,
    i: usize,
) -> f64 {
    let sx_i = universe.covariance().row(i).dot(&x.transpose());
    let vol = x.dot(&(universe.covariance() * x)).max(0.0).sqrt();
    -universe.excess_returns()[i] + params.c() * sx_i / vol - lambda * budgets[i] / x[i]
}

/// Proximal coordinate step `P_[lo, hi](x_i - eta g_i)`.
pub fn coordinate_prox_update(x_i: f64, g_i: f64, eta: f64, lo: f64, hi: f64) -> f64 {
    (x_i - eta * g_i).max(lo).min(hi)
}

/// Coordinate descent driven by [`coordinate_prox_update`].
///
/// Offered as an alternative to the closed-form rule; a step that would leave
/// the positive orthant is halved toward the current value.
pub fn prox_coordinate_descent(
    universe: &AssetUniverse,
    params: &RiskParams,
    budgets: &Budgets,
    lambda: f64,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    x_init: &DVector<f64>,
    eta: f64,
    options: &CcdOptions,
) -> Result<InnerSolution> {
    check_start(universe, budgets, lambda, x_init)?;
    if !(eta > 0.0) {
        return Err(Error::InvalidOptions(format!("step size must be positive, got {eta}")));
    }
    let mut x = x_init.clone();
    let mut displacement = f64::INFINITY;
    for sweep in 1..=options.max_sweeps {
        let mut moved = 0.0;
        for i in 0..x.len() {
            let g = coordinate_gradient(universe, params, budgets, lambda, &x, i);
            let mut next = coordinate_prox_update(x[i], g, eta, lo[i], hi[i]);
            while next <= 0.0 {
                next = 0.5 * (next.max(0.0) + x[i]);
            }
            moved += (next - x[i]).powi(2);
            x[i] = next;
        }
        displacement = moved.sqrt();
        if displacement <= options.tol {
            return Ok(InnerSolution { x, iterations: sweep });
        }
    }
    Err(Error::NonConvergence {
        stage: "prox coordinate descent",
        iterations: options.max_sweeps,
        residual: displacement,
        last_iterate: x.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn two_assets(rho: f64) -> AssetUniverse {
        AssetUniverse::from_vol_corr(
            DVector::from_vec(vec![0.1, 0.3]),
            DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn root_is_stable_for_both_signs() {
        for &(a, b, c) in &[(1.0, 1e8, -1.0), (1.0, -1e8, -1.0), (2.0, 0.0, -8.0)] {
            let x = positive_root(a, b, c);
            assert!(x > 0.0);
            assert!((a * x * x + b * x + c).abs() <= 1e-12 * (b * x).abs().max(1.0));
        }
    }

    #[test]
    fn two_asset_erc_is_inverse_vol() {
        for &rho in &[-0.5, 0.0, 0.7] {
            let u = two_assets(rho);
            let out = ccd_unconstrained(
                &u,
                &RiskParams::default(),
                &Budgets::equal(2),
                1.0,
                &DVector::from_element(2, 1.0),
                &CcdOptions::default(),
            )
            .unwrap();
            let x = &out.x / out.x.sum();
            assert!((x[0] - 0.75).abs() < 1e-10, "rho {rho}: {x}");
        }
    }

    #[test]
    fn open_box_equals_unconstrained() {
        let u = two_assets(0.3);
        let b = Budgets::new(vec![0.3, 0.7]).unwrap();
        let x0 = DVector::from_element(2, 0.5);
        let free = ccd_unconstrained(&u, &RiskParams::default(), &b, 0.2, &x0, &CcdOptions::default()).unwrap();
        let boxed = ccd_separable(
            &u,
            &RiskParams::default(),
            &b,
            0.2,
            &DVector::zeros(2),
            &DVector::from_element(2, f64::INFINITY),
            &x0,
            &CcdOptions::default(),
        )
        .unwrap();
        assert_eq!(free.x, boxed.x);
    }

    #[test]
    fn pinned_box_returns_pins() {
        let u = two_assets(0.3);
        let pins = DVector::from_vec(vec![0.4, 0.6]);
        let out = ccd_separable(
            &u,
            &RiskParams::default(),
            &Budgets::equal(2),
            0.05,
            &pins,
            &pins,
            &DVector::from_element(2, 0.5),
            &CcdOptions::default(),
        )
        .unwrap();
        assert_eq!(out.x, pins);
    }

    #[test]
    fn prox_update_edge_cases() {
        assert_eq!(coordinate_prox_update(0.3, 0.0, 0.5, 0.0, 1.0), 0.3);
        assert_eq!(coordinate_prox_update(0.3, 2.0, 0.1, f64::NEG_INFINITY, f64::INFINITY), 0.3 - 0.2);
        assert_eq!(coordinate_prox_update(0.3, -10.0, 0.1, 0.0, 0.5), 0.5);
    }

    #[test]
    fn rejects_nonpositive_start() {
        let u = two_assets(0.0);
        let err = ccd_unconstrained(
            &u,
            &RiskParams::default(),
            &Budgets::equal(2),
            1.0,
            &DVector::from_vec(vec![1.0, 0.0]),
            &CcdOptions::default(),
        );
        assert!(matches!(err, Err(Error::InvalidOptions(_))));
    }
}
