//! Outer loop on `lambda` enforcing `sum x = 1`.

use nalgebra::DVector;

use super::InnerSolution;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionOptions {
    /// Bound on `|sum x - 1|`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_expansions: usize,
    /// Warm-start each inner solve from the previous solution.
    pub accelerated: bool,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            max_expansions: 10,
            accelerated: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionStep {
    pub lambda: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectionOutcome {
    pub lambda: f64,
    pub x: DVector<f64>,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub trace: Vec<BisectionStep>,
}

struct Tracker<F> {
    solve: F,
    accelerated: bool,
    previous: Option<DVector<f64>>,
    inner_iterations: usize,
    trace: Vec<BisectionStep>,
}

impl<F> Tracker<F>
where
    F: FnMut(f64, Option<&DVector<f64>>) -> Result<InnerSolution>,
{
    fn eval(&mut self, lambda: f64) -> Result<(f64, DVector<f64>)> {
        let warm = if self.accelerated { self.previous.as_ref() } else { None };
        let sol = (self.solve)(lambda, warm)?;
        self.inner_iterations += sol.iterations;
        let total = sol.x.sum();
        self.trace.push(BisectionStep { lambda, total });
        self.previous = Some(sol.x.clone());
        Ok((total - 1.0, sol.x))
    }

    fn finish(self, lambda: f64, x: DVector<f64>, iterations: usize) -> BisectionOutcome {
        BisectionOutcome {
            lambda,
            x,
            iterations,
            inner_iterations: self.inner_iterations,
            trace: self.trace,
        }
    }
}

/// Finds `lambda` with `|sum x*(lambda) - 1| <= tol` on a bracket `[a, b]`.
///
/// `solve_inner(lambda, warm)` returns `x*(lambda)`; `warm` is the previous
/// solution in accelerated mode and `None` otherwise. `sum x*` must be
/// non-decreasing in `lambda`. A bracket that fails to straddle the root is
/// widened by halving `a` or doubling `b`.
pub fn bisection<F>(solve_inner: F, a: f64, b: f64, options: &BisectionOptions) -> Result<BisectionOutcome>
where
    F: FnMut(f64, Option<&DVector<f64>>) -> Result<InnerSolution>,
{
    if !(a > 0.0 && a < b && b.is_finite()) {
        return Err(Error::InvalidOptions(format!("invalid lambda bracket [{a}, {b}]")));
    }
    let mut t = Tracker {
        solve: solve_inner,
        accelerated: options.accelerated,
        previous: None,
        inner_iterations: 0,
        trace: Vec::new(),
    };
    let (mut lo, mut hi) = (a, b);
    let (mut f_lo, x_lo) = t.eval(lo)?;
    if f_lo.abs() <= options.tol {
        return Ok(t.finish(lo, x_lo, 1));
    }
    let (mut f_hi, x_hi) = t.eval(hi)?;
    if f_hi.abs() <= options.tol {
        return Ok(t.finish(hi, x_hi, 2));
    }
    let mut evaluations = 2;
    let mut expansions = 0;
    while f_lo > 0.0 || f_hi < 0.0 {
        if expansions == options.max_expansions {
            return Err(Error::Bracket {
                lower: lo,
                upper: hi,
                f_lower: f_lo,
                f_upper: f_hi,
            });
        }
        expansions += 1;
        evaluations += 1;
        if f_lo > 0.0 {
            hi = lo;
            f_hi = f_lo;
            lo *= 0.5;
            let (f, x) = t.eval(lo)?;
            if f.abs() <= options.tol {
                return Ok(t.finish(lo, x, evaluations));
            }
            f_lo = f;
        } else {
            lo = hi;
            f_lo = f_hi;
            hi *= 2.0;
            let (f, x) = t.eval(hi)?;
            if f.abs() <= options.tol {
                return Ok(t.finish(hi, x, evaluations));
            }
            f_hi = f;
        }
    }

    let mut last = f64::NAN;
    for _ in 0..options.max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        evaluations += 1;
        let (f, x) = t.eval(mid)?;
        if f.abs() <= options.tol {
            return Ok(t.finish(mid, x, evaluations));
        }
        last = f;
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence {
        stage: "bisection",
        iterations: evaluations,
        residual: last.abs(),
        last_iterate: t.previous.map(|x| x.iter().copied().collect()).unwrap_or_default(),
    })
}
