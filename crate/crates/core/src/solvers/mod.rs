//! Solvers for the risk budgeting portfolio.
//!
//! [`solve`] routes a [`Problem`] by the structure of its constraint set:
//! no constraints are solved once and rescaled, a box goes to coordinate
//! descent inside the bisection on `lambda`, anything else to ADMM inside
//! the bisection.

pub mod admm;
pub mod bisection;
pub mod ccd;
pub mod newton;
mod objective;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

pub use admm::{adaptive_penalty, admm, AdaptivePenalty, AdmmOptions, AdmmSolution, AdmmState, Split, XUpdate};
pub use bisection::{bisection, BisectionOptions, BisectionOutcome, BisectionStep};
pub use ccd::{
    ccd_separable, ccd_unconstrained, coordinate_gradient, coordinate_prox_update, prox_coordinate_descent,
    CcdOptions,
};
pub use newton::{newton_unconstrained, NewtonOptions};

use crate::constraints::{ConstraintSet, Separability};
use crate::error::{check_len, Error, Result};
use crate::model::{decompose, risk_measure, volatility, AssetUniverse, Budgets, Portfolio, RiskDecomposition, RiskParams};
use crate::prox::DykstraOptions;

/// Result of one inner minimization at fixed `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Ccd,
    AdmmNewton,
    AdmmCcd,
    AdmmQp,
    Auto,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Ccd,
        Algorithm::AdmmNewton,
        Algorithm::AdmmCcd,
        Algorithm::AdmmQp,
        Algorithm::Auto,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ccd => "ccd",
            Algorithm::AdmmNewton => "admm-newton",
            Algorithm::AdmmCcd => "admm-ccd",
            Algorithm::AdmmQp => "admm-qp",
            Algorithm::Auto => "auto",
        }
    }

    fn x_update(self) -> Option<XUpdate> {
        match self {
            Algorithm::AdmmNewton => Some(XUpdate::Newton),
            Algorithm::AdmmCcd => Some(XUpdate::Ccd),
            Algorithm::AdmmQp => Some(XUpdate::Qp),
            Algorithm::Ccd | Algorithm::Auto => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::InvalidOptions(format!(
                    "unknown algorithm '{s}' (expected ccd, admm-newton, admm-ccd, admm-qp or auto)"
                ))
            })
    }
}

/// Initial portfolio of the inner solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum StartPoint {
    /// `b_i / sigma_i`, normalized.
    NaiveRiskParity,
    EqualWeight,
    /// Any strictly positive vector, normalized.
    Custom(DVector<f64>),
}

impl StartPoint {
    pub fn resolve(&self, universe: &AssetUniverse, budgets: &Budgets) -> Result<DVector<f64>> {
        let n = universe.len();
        let raw = match self {
            StartPoint::NaiveRiskParity => budgets.as_vector().component_div(universe.volatilities()),
            StartPoint::EqualWeight => DVector::from_element(n, 1.0),
            StartPoint::Custom(x) => {
                check_len("starting portfolio", n, x.len())?;
                if x.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidOptions("starting portfolio must be strictly positive".into()));
                }
                x.clone()
            }
        };
        Ok(&raw / raw.sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub algorithm: Algorithm,
    /// Inner tolerance: sweep displacement for CCD, step length for Newton,
    /// primal and dual residuals for ADMM.
    pub inner_tol: f64,
    /// Bound on `|sum x - 1|`.
    pub lambda_tol: f64,
    /// Tolerance of the x-update inside ADMM.
    pub x_update_tol: f64,
    pub phi0: f64,
    pub adaptive: bool,
    pub penalty: AdaptivePenalty,
    pub max_iter: usize,
    /// Bracket `[m_a, m_b] * R(x_RB)` of the outer loop.
    pub bracket_lower: f64,
    pub bracket_upper: f64,
    pub accelerated: bool,
    pub start: StartPoint,
    pub dykstra: DykstraOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Auto,
            inner_tol: 1e-12,
            lambda_tol: 1e-8,
            x_update_tol: 1e-13,
            phi0: 1.0,
            adaptive: true,
            penalty: AdaptivePenalty::default(),
            max_iter: 20_000,
            bracket_lower: 0.5,
            bracket_upper: 2.0,
            accelerated: true,
            start: StartPoint::NaiveRiskParity,
            dykstra: DykstraOptions::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("inner tolerance", self.inner_tol),
            ("lambda tolerance", self.lambda_tol),
            ("x-update tolerance", self.x_update_tol),
            ("phi", self.phi0),
            ("bracket lower multiplier", self.bracket_lower),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidOptions(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.bracket_lower <= 1.0 && self.bracket_upper >= 1.0 && self.bracket_upper.is_finite()) {
            return Err(Error::InvalidOptions(format!(
                "bracket multipliers must satisfy m_a <= 1 <= m_b, got {} and {}",
                self.bracket_lower, self.bracket_upper
            )));
        }
        let p = &self.penalty;
        if !(p.mu >= 1.0 && p.tau > 1.0 && p.tau_prime > 1.0) {
            return Err(Error::InvalidOptions("penalty rule needs mu >= 1 and tau, tau' > 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidOptions("iteration limit must be positive".into()));
        }
        Ok(())
    }

    fn ccd(&self) -> CcdOptions {
        CcdOptions {
            tol: self.inner_tol,
            max_sweeps: self.max_iter,
        }
    }

    fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.inner_tol,
            ..NewtonOptions::default()
        }
    }

    fn admm(&self) -> AdmmOptions {
        AdmmOptions {
            tol: self.inner_tol,
            inner_tol: self.x_update_tol,
            max_iter: self.max_iter,
            phi0: self.phi0,
            adaptive: self.adaptive.then_some(self.penalty),
            dykstra: self.dykstra,
        }
    }

    fn bisection(&self) -> BisectionOptions {
        BisectionOptions {
            tol: self.lambda_tol,
            accelerated: self.accelerated,
            ..BisectionOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub universe: AssetUniverse,
    pub params: RiskParams,
    pub budgets: Budgets,
    pub constraints: ConstraintSet,
}

impl Problem {
    pub fn new(universe: AssetUniverse, params: RiskParams, budgets: Budgets, constraints: ConstraintSet) -> Result<Self> {
        check_len("budgets", universe.len(), budgets.len())?;
        check_len("constraint set", universe.len(), constraints.dim())?;
        Ok(Self {
            universe,
            params,
            budgets,
            constraints,
        })
    }

    pub fn unconstrained(universe: AssetUniverse, params: RiskParams, budgets: Budgets) -> Result<Self> {
        let n = universe.len();
        Self::new(universe, params, budgets, ConstraintSet::new(n))
    }

    pub fn with_constraints(&self, constraints: ConstraintSet) -> Result<Self> {
        Self::new(self.universe.clone(), self.params, self.budgets.clone(), constraints)
    }
}

/// Multipliers of the lower and upper bound of one asset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundMultipliers {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Iterations {
    /// Evaluations of the inner problem by the outer loop.
    pub outer: usize,
    /// CCD sweeps, Newton steps or ADMM iterations, summed.
    pub inner: usize,
    /// Iterations of the ADMM x-update, summed.
    pub x_update: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub portfolio: Portfolio,
    /// Lagrange multiplier of the budget constraint, in units of `R(x)`.
    pub lambda: f64,
    pub decomposition: RiskDecomposition,
    /// Present when `Omega` is a box.
    pub kkt: Option<Vec<BoundMultipliers>>,
    pub lagrangian: f64,
    pub algorithm: Algorithm,
    pub iterations: Iterations,
    pub trace: Vec<BisectionStep>,
    pub warnings: Vec<String>,
    /// The constraint encodings as written.
    pub constraints: Vec<String>,
    pub budget_residual: f64,
    pub feasibility_residual: f64,
}

impl SolveReport {
    pub fn weights(&self) -> &DVector<f64> {
        self.portfolio.weights()
    }
}

/// `L(x; lambda) = R(x) - lambda sum_i b_i ln x_i`.
pub fn lagrangian(x: &DVector<f64>, lambda: f64, universe: &AssetUniverse, params: &RiskParams, budgets: &Budgets) -> f64 {
    let barrier: f64 = x.iter().zip(budgets.as_vector().iter()).map(|(xi, bi)| bi * xi.ln()).sum();
    risk_measure(x, universe, params) - lambda * barrier
}

/// Bound multipliers recovered from the risk contributions at the solution.
pub fn kkt_multipliers(
    x: &DVector<f64>,
    lambda: f64,
    budgets: &Budgets,
    decomposition: &RiskDecomposition,
) -> Vec<BoundMultipliers> {
    (0..x.len())
        .map(|i| {
            let gap = (decomposition.rc[i] - lambda * budgets[i]) / x[i];
            BoundMultipliers {
                lower: gap.max(0.0),
                upper: (-gap).max(0.0),
            }
        })
        .collect()
}

/// Default x-update for coupled constraint sets.
pub const COUPLED_DEFAULT: Algorithm = Algorithm::AdmmCcd;

pub fn solve(problem: &Problem, options: &SolverOptions) -> Result<SolveReport> {
    options.validate()?;
    let Problem {
        universe,
        params,
        budgets,
        constraints,
    } = problem;
    check_len("budgets", universe.len(), budgets.len())?;
    check_len("constraint set", universe.len(), constraints.dim())?;
    if params.c() <= 0.0 {
        return Err(Error::InvalidOptions("the barrier solvers need c > 0".into()));
    }
    let mut warnings: Vec<String> = params
        .existence_warning(universe)
        .into_iter()
        .chain(budgets.small_budget_warning())
        .collect();

    let x0 = options.start.resolve(universe, budgets)?;
    let separability = constraints.classify();
    let mut algorithm = match (options.algorithm, &separability) {
        (Algorithm::Auto, Separability::Separable { .. }) => Algorithm::Ccd,
        (Algorithm::Auto, Separability::Coupled) => COUPLED_DEFAULT,
        (Algorithm::Ccd, Separability::Coupled) => {
            return Err(Error::InvalidOptions(
                "coordinate descent needs a separable (box) constraint set; use an ADMM variant".into(),
            ))
        }
        (other, _) => other,
    };
    if algorithm == Algorithm::AdmmQp {
        if universe.has_excess_returns() {
            return Err(Error::InvalidOptions(
                "admm-qp needs expected returns equal to the risk-free rate".into(),
            ));
        }
        if constraints.has_l1_ball() {
            warnings.push("admm-qp cannot carry a turnover constraint; using admm-ccd instead".into());
            algorithm = Algorithm::AdmmCcd;
        }
    }

    // unconstrained RB portfolio: the answer without constraints, the bracket scale otherwise
    let use_newton = algorithm == Algorithm::AdmmNewton;
    let unconstrained = if use_newton {
        newton_unconstrained(universe, params, budgets, 1.0, &x0, &options.newton())?
    } else {
        ccd_unconstrained(universe, params, budgets, 1.0, &x0, &options.ccd())?
    };
    let x_rb = &unconstrained.x / unconstrained.x.sum();
    let r_rb = risk_measure(&x_rb, universe, params);
    if !(r_rb > 0.0) {
        return Err(Error::InvalidOptions(format!(
            "risk of the unconstrained RB portfolio is {r_rb}; increase c"
        )));
    }

    let (x, lambda, iterations, trace) = if constraints.is_empty() {
        if !use_newton {
            algorithm = Algorithm::Ccd;
        }
        let iterations = Iterations {
            outer: 1,
            inner: unconstrained.iterations,
            x_update: 0,
        };
        (x_rb, r_rb, iterations, Vec::new())
    } else if algorithm == Algorithm::Ccd {
        let Separability::Separable { lo, hi } = &separability else {
            unreachable!("ccd is only selected for separable sets")
        };
        if let Some(i) = hi.iter().position(|&h| h <= 0.0) {
            return Err(Error::InvalidBounds {
                index: i,
                lower: lo[i],
                upper: hi[i],
            });
        }
        let ccd_options = options.ccd();
        let start = DVector::from_fn(x0.len(), |i, _| x0[i].max(lo[i]).min(hi[i]).max(f64::MIN_POSITIVE));
        let outcome = bisection(
            |lambda, warm| {
                ccd_separable(universe, params, budgets, lambda, lo, hi, warm.unwrap_or(&start), &ccd_options)
            },
            options.bracket_lower * r_rb,
            options.bracket_upper * r_rb,
            &options.bisection(),
        )?;
        let iterations = Iterations {
            outer: outcome.iterations,
            inner: outcome.inner_iterations,
            x_update: 0,
        };
        (outcome.x, outcome.lambda, iterations, outcome.trace)
    } else {
        let x_update = algorithm.x_update().expect("admm variant");
        let admm_options = options.admm();
        let mut state = AdmmState::new(x0.clone(), options.phi0);
        let mut x_update_iterations = 0;
        // the QP split works on the variance, whose multiplier is lambda sigma / c
        let scale = match x_update {
            XUpdate::Qp => volatility(&x_rb, universe) / params.c(),
            XUpdate::Newton | XUpdate::Ccd => 1.0,
        };
        let outcome = bisection(
            |lambda, warm| {
                if warm.is_none() {
                    state.reset(&x0, options.phi0);
                }
                let sol = admm(universe, params, budgets, lambda, constraints, x_update, &admm_options, &mut state)?;
                x_update_iterations += sol.inner_iterations;
                Ok(InnerSolution {
                    x: sol.x,
                    iterations: sol.iterations,
                })
            },
            options.bracket_lower * r_rb * scale,
            options.bracket_upper * r_rb * scale,
            &options.bisection(),
        )?;
        let lambda = match x_update {
            XUpdate::Qp => outcome.lambda * params.c() / volatility(&outcome.x, universe),
            XUpdate::Newton | XUpdate::Ccd => outcome.lambda,
        };
        let iterations = Iterations {
            outer: outcome.iterations,
            inner: outcome.inner_iterations,
            x_update: x_update_iterations,
        };
        (outcome.x, lambda, iterations, outcome.trace)
    };

    finish(problem, x, lambda, algorithm, iterations, trace, warnings, &separability)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &Problem,
    x: DVector<f64>,
    lambda: f64,
    algorithm: Algorithm,
    iterations: Iterations,
    trace: Vec<BisectionStep>,
    mut warnings: Vec<String>,
    separability: &Separability,
) -> Result<SolveReport> {
    let Problem {
        universe,
        params,
        budgets,
        constraints,
    } = problem;
    let decomposition = decompose(&x, universe, params)?;
    let kkt = match separability {
        Separability::Separable { .. } => Some(kkt_multipliers(&x, lambda, budgets, &decomposition)),
        Separability::Coupled => None,
    };
    let feasibility = constraints.contains_tol(&x, 1e-6);
    if !feasibility.feasible {
        warnings.push(format!(
            "solution violates the constraints by {:.3e}",
            feasibility.max_residual()
        ));
    }
    Ok(SolveReport {
        lagrangian: lagrangian(&x, lambda, universe, params, budgets),
        budget_residual: (x.sum() - 1.0).abs(),
        feasibility_residual: feasibility.max_residual(),
        portfolio: Portfolio::new(x)?,
        lambda,
        decomposition,
        kkt,
        algorithm,
        iterations,
        trace,
        warnings,
        constraints: constraints.atoms().iter().map(|a| a.label.clone()).collect(),
    })
}

/// Ranking of alternative solves by their Lagrangian value.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Index of the lowest Lagrangian.
    pub best: usize,
    /// Indices in ascending order of Lagrangian.
    pub ranking: Vec<usize>,
    /// Set when the candidate portfolios differ by more than `1e-6`.
    pub disagreement: bool,
}

/// Picks the candidate with the lowest `L(x*; lambda*)`.
pub fn select_best(reports: &[SolveReport]) -> Result<Selection> {
    if reports.is_empty() {
        return Err(Error::Validation("no solve reports to select from".into()));
    }
    let mut ranking: Vec<usize> = (0..reports.len()).collect();
    ranking.sort_by(|&a, &b| reports[a].lagrangian.total_cmp(&reports[b].lagrangian));
    let best = ranking[0];
    let disagreement = reports
        .iter()
        .any(|r| (r.weights() - reports[best].weights()).amax() > 1e-6);
    Ok(Selection {
        best,
        ranking,
        disagreement,
    })
}
