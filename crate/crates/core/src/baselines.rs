//! Comparison methods: the least-squares formulation and the naive two-step portfolio.
//!
//! The least-squares problem `min sum_i (RC_i(x) / b_i - theta)^2` over the
//! simplex intersected with `Omega` is not convex, so it is solved from
//! several starting points and the best local minimum is kept.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use rayon::prelude::*;

use crate::constraints::{ConstraintSet, Separability};
use crate::error::{check_len, Error, Result};
use crate::model::{decompose, AssetUniverse, Budgets, Portfolio, RiskDecomposition, RiskParams};
use crate::solvers::{ccd_unconstrained, CcdOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct LsOptions {
    pub starts: usize,
    pub seed: u64,
    /// Extra starting portfolio, typically capitalization weights.
    pub benchmark: Option<DVector<f64>>,
    pub max_iter: usize,
    /// Bound on the step length of the projected gradient.
    pub tol: f64,
}

impl Default for LsOptions {
    fn default() -> Self {
        Self {
            starts: 16,
            seed: 0x1ea5_75e0,
            benchmark: None,
            max_iter: 20_000,
            tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    pub portfolio: Portfolio,
    pub decomposition: RiskDecomposition,
    /// `sum_i (RC_i / b_i - theta)^2` at the returned portfolio.
    pub objective: f64,
    /// Whether the objective reached `1e-10 R(x)^2`, i.e. an exact RB portfolio.
    pub matched: bool,
    /// Objective reached from each start, in start order.
    pub start_objectives: Vec<f64>,
}

/// Adds `sum x = 1` and `x >= 0` to `omega`, as the least-squares route requires.
pub fn with_simplex(omega: &ConstraintSet) -> Result<ConstraintSet> {
    let n = omega.dim();
    omega
        .clone()
        .with_box(DVector::zeros(n), DVector::from_element(n, f64::INFINITY))?
        .with_eq(DVector::from_element(n, 1.0), 1.0, "sum x = 1")
}

/// Feasible set of the least-squares route with a fast path for box plus simplex.
enum Feasible<'a> {
    CappedSimplex { lo: DVector<f64>, hi: DVector<f64> },
    General(&'a ConstraintSet),
}

impl Feasible<'_> {
    fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Feasible::CappedSimplex { lo, hi } => Ok(project_capped_simplex(v, lo, hi)),
            Feasible::General(set) => set.project(v),
        }
    }
}

fn classify_feasible(omega: &ConstraintSet) -> Result<Feasible<'_>> {
    let mut boxes = ConstraintSet::new(omega.dim());
    let mut simplex = false;
    for atom in omega.atoms() {
        match &atom.atom {
            crate::constraints::Atom::AffineEq { a, b }
                if a.nrows() == 1 && a.iter().all(|&v| v == 1.0) && b[0] == 1.0 =>
            {
                simplex = true;
            }
            crate::constraints::Atom::Box { .. } => boxes.push(atom.atom.clone(), atom.label.clone())?,
            _ => return Ok(Feasible::General(omega)),
        }
    }
    match (simplex, boxes.classify()) {
        (true, Separability::Separable { lo, hi }) => {
            if lo.iter().any(|&l| l < 0.0) {
                return Ok(Feasible::General(omega));
            }
            if lo.sum() > 1.0 + 1e-12 || hi.sum() < 1.0 - 1e-12 {
                return Err(Error::InvalidConstraint("bounds are incompatible with sum x = 1".into()));
            }
            Ok(Feasible::CappedSimplex { lo, hi })
        }
        _ => Ok(Feasible::General(omega)),
    }
}

/// Projection onto `{x : sum x = 1, lo <= x <= hi}` by a root search on the shift.
fn project_capped_simplex(v: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    let shifted = |t: f64| DVector::from_fn(v.len(), |i, _| (v[i] - t).max(lo[i]).min(hi[i]));
    let total = |t: f64| shifted(t).sum();
    let (mut a, mut b) = (
        (v - hi).iter().copied().filter(|x| x.is_finite()).fold(f64::INFINITY, f64::min),
        (v - lo).max(),
    );
    if !a.is_finite() {
        a = v.min() - 1.0;
    }
    while total(a) < 1.0 {
        a -= 1.0 + a.abs();
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if total(mid) > 1.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let t = 0.5 * (a + b);
    // exact shift on the free coordinates
    let x = shifted(t);
    let free: Vec<usize> = (0..v.len()).filter(|&i| x[i] > lo[i] && x[i] < hi[i]).collect();
    if free.is_empty() {
        return x;
    }
    let fixed: f64 = (0..v.len()).filter(|i| !free.contains(i)).map(|i| x[i]).sum();
    let t_exact = (free.iter().map(|&i| v[i]).sum::<f64>() + fixed - 1.0) / free.len() as f64;
    let refined = shifted(t_exact);
    if (refined.sum() - 1.0).abs() <= (x.sum() - 1.0).abs() {
        refined
    } else {
        x
    }
}

struct LsObjective<'a> {
    cov: &'a DMatrix<f64>,
    excess: &'a DVector<f64>,
    c: f64,
    b: &'a DVector<f64>,
}

impl LsObjective<'_> {
    fn value_and_gradient(&self, x: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let sx = self.cov * x;
        let var = x.dot(&sx);
        if !(var > 0.0) {
            return None;
        }
        let vol = var.sqrt();
        let mr = &sx * (self.c / vol) - self.excess;
        let y = x.component_mul(&mr).component_div(self.b);
        let mean = y.mean();
        let dev = y.add_scalar(-mean);
        let value = dev.norm_squared();
        let w = dev.component_div(self.b);
        // J = diag(mr) + diag(x) c (Sigma / sigma - sx sx' / sigma^3)
        let xw = x.component_mul(&w);
        let hess_xw = (self.cov * &xw) * (self.c / vol) - &sx * (self.c * sx.dot(&xw) / (var * vol));
        let grad = (mr.component_mul(&w) + hess_xw) * 2.0;
        Some((value, grad))
    }
}

fn descend(f: &LsObjective<'_>, feasible: &Feasible<'_>, start: &DVector<f64>, options: &LsOptions) -> Result<(DVector<f64>, f64)> {
    let mut x = feasible.project(start)?;
    let Some((mut value, mut grad)) = f.value_and_gradient(&x) else {
        return Ok((x, f64::INFINITY));
    };
    let mut step = 1.0 / grad.amax().max(1e-300);
    for _ in 0..options.max_iter {
        let mut accepted = None;
        let mut t = step;
        for _ in 0..60 {
            let candidate = feasible.project(&(&x - &grad * t))?;
            let moved = (&candidate - &x).norm_squared();
            if let Some((v, g)) = f.value_and_gradient(&candidate) {
                if v <= value - 1e-4 * moved / t || moved == 0.0 {
                    accepted = Some((candidate, v, g, moved));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((candidate, v, g, moved)) = accepted else {
            break;
        };
        let s = &candidate - &x;
        let dg = &g - &grad;
        let sy = s.dot(&dg);
        step = if sy > 0.0 { (s.norm_squared() / sy).clamp(1e-12, 1e12) } else { (t * 2.0).min(1e12) };
        x = candidate;
        value = v;
        grad = g;
        if moved.sqrt() <= options.tol || value == 0.0 {
            break;
        }
    }
    Ok((x, value))
}

/// Least-squares RB portfolio over `feasible`, which must carry `sum x = 1` and `x >= 0`.
pub fn least_squares_rb(
    universe: &AssetUniverse,
    params: &RiskParams,
    budgets: &Budgets,
    feasible: &ConstraintSet,
    options: &LsOptions,
) -> Result<LsSolution> {
    let n = universe.len();
    check_len("budgets", n, budgets.len())?;
    check_len("constraint set", n, feasible.dim())?;
    if options.starts == 0 {
        return Err(Error::InvalidOptions("least squares needs at least one start".into()));
    }
    let set = classify_feasible(feasible)?;
    let f = LsObjective {
        cov: universe.covariance(),
        excess: universe.excess_returns(),
        c: params.c(),
        b: budgets.as_vector(),
    };

    let mut starts = vec![
        budgets.as_vector().component_div(universe.volatilities()),
        DVector::from_element(n, 1.0 / n as f64),
    ];
    if let Some(cw) = &options.benchmark {
        check_len("benchmark weights", n, cw.len())?;
        starts.push(cw.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    if n > 1 {
        let dirichlet = Dirichlet::new(&vec![1.0; n]).map_err(|e| Error::Validation(e.to_string()))?;
        while starts.len() < options.starts {
            starts.push(DVector::from_vec(dirichlet.sample(&mut rng)));
        }
    }
    starts.truncate(options.starts.max(1));
    for s in starts.iter_mut() {
        let total = s.sum();
        *s /= total;
    }

    let runs: Vec<(DVector<f64>, f64)> = starts
        .par_iter()
        .map(|s| descend(&f, &set, s, options))
        .collect::<Result<_>>()?;
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .expect("at least one start");
    let (x, objective) = runs[best].clone();
    let decomposition = decompose(&x, universe, params)?;
    let matched = objective <= 1e-10 * decomposition.risk * decomposition.risk;
    Ok(LsSolution {
        portfolio: Portfolio::new(x)?,
        decomposition,
        objective,
        matched,
        start_objectives: runs.iter().map(|r| r.1).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveSolution {
    pub portfolio: Portfolio,
    /// Decomposition in the full universe.
    pub decomposition: RiskDecomposition,
    /// Risk contributions of the free assets measured inside the sub-universe.
    pub sub_rc: DVector<f64>,
    pub free: Vec<usize>,
}

/// Pins the given assets, then spreads the remaining weight as an RB portfolio
/// of the other assets computed on their own covariance.
pub fn naive_two_step(
    universe: &AssetUniverse,
    params: &RiskParams,
    budgets: &Budgets,
    pinned: &[(usize, f64)],
) -> Result<NaiveSolution> {
    let n = universe.len();
    check_len("budgets", n, budgets.len())?;
    let mut x = DVector::zeros(n);
    let mut is_pinned = vec![false; n];
    for &(i, w) in pinned {
        if i >= n || is_pinned[i] {
            return Err(Error::Validation(format!("pinned asset index {i} is invalid or repeated")));
        }
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Validation(format!("pinned weight {w} must be non-negative")));
        }
        is_pinned[i] = true;
        x[i] = w;
    }
    let mass = 1.0 - x.sum();
    let free: Vec<usize> = (0..n).filter(|&i| !is_pinned[i]).collect();
    if free.is_empty() || !(mass > 0.0) {
        return Err(Error::Validation(format!(
            "pinned assets leave {mass} of the portfolio for {} free assets",
            free.len()
        )));
    }
    let sub = universe.subset(&free)?;
    let sub_budget_total: f64 = free.iter().map(|&i| budgets[i]).sum();
    let sub_budgets = Budgets::new(free.iter().map(|&i| budgets[i] / sub_budget_total).collect())
        .or_else(|_| {
            // renormalization may miss the 1e-12 sum tolerance by an ulp
            let raw: Vec<f64> = free.iter().map(|&i| budgets[i]).collect();
            let total: f64 = raw.iter().sum();
            let mut scaled: Vec<f64> = raw.iter().map(|b| b / total).collect();
            let drift: f64 = 1.0 - scaled.iter().sum::<f64>();
            scaled[0] += drift;
            Budgets::new(scaled)
        })?;
    let start = sub_budgets.as_vector().component_div(sub.volatilities());
    let inner = ccd_unconstrained(&sub, params, &sub_budgets, 1.0, &start, &CcdOptions::default())?;
    let y = &inner.x * (mass / inner.x.sum());
    for (k, &i) in free.iter().enumerate() {
        x[i] = y[k];
    }
    let sub_decomposition = decompose(&y, &sub, params)?;
    Ok(NaiveSolution {
        decomposition: decompose(&x, universe, params)?,
        portfolio: Portfolio::new(x)?,
        sub_rc: sub_decomposition.rc,
        free,
    })
}
