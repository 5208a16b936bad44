//! Asset universe, risk budgets and the standard-deviation-based risk measure
//!
//! The risk measure is `R(x) = -x'(mu - r) + c * sqrt(x' Sigma x)`. It is
//! positively homogeneous of degree one, so the Euler decomposition
//! `R(x) = sum_i x_i dR/dx_i` splits it into per-asset risk contributions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};

/// Smallest eigenvalue accepted for a correlation matrix.
pub const PSD_TOLERANCE: f64 = -1e-10;
/// Tolerance on symmetry, unit diagonal and vol/corr vs covariance agreement.
pub const MATRIX_TOLERANCE: f64 = 1e-12;
/// Budgets must sum to one within this tolerance.
pub const BUDGET_SUM_TOLERANCE: f64 = 1e-12;
/// Smallest admissible risk budget.
pub const MIN_BUDGET: f64 = 1e-6;
/// Budgets below this level are accepted but flagged.
pub const SMALL_BUDGET_WARNING: f64 = 1e-4;

const SHARPE_STARTS: usize = 32;

/// Builds `Sigma_ij = rho_ij sigma_i sigma_j` after validating both inputs.
pub fn covariance(vol: &DVector<f64>, corr: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    validate_vol(vol)?;
    validate_correlation(corr, vol.len())?;
    Ok(scale_correlation(vol, corr))
}

fn scale_correlation(vol: &DVector<f64>, corr: &DMatrix<f64>) -> DMatrix<f64> {
    let n = vol.len();
    DMatrix::from_fn(n, n, |i, j| corr[(i, j)] * vol[i] * vol[j])
}

fn validate_vol(vol: &DVector<f64>) -> Result<()> {
    if vol.is_empty() {
        return Err(Error::Validation("asset universe is empty".into()));
    }
    for (i, &s) in vol.iter().enumerate() {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Validation(format!(
                "volatility of asset {} must be strictly positive, got {s}",
                i + 1
            )));
        }
    }
    Ok(())
}

fn validate_correlation(corr: &DMatrix<f64>, n: usize) -> Result<()> {
    check_len("correlation rows", n, corr.nrows())?;
    check_len("correlation columns", n, corr.ncols())?;
    for i in 0..n {
        if (corr[(i, i)] - 1.0).abs() > MATRIX_TOLERANCE {
            return Err(Error::Validation(format!(
                "correlation diagonal entry {} is {}, expected 1",
                i + 1,
                corr[(i, i)]
            )));
        }
        for j in 0..n {
            let v = corr[(i, j)];
            if !v.is_finite() || v.abs() > 1.0 + MATRIX_TOLERANCE {
                return Err(Error::Validation(format!(
                    "correlation ({}, {}) = {v} is outside [-1, 1]",
                    i + 1,
                    j + 1
                )));
            }
            if (v - corr[(j, i)]).abs() > MATRIX_TOLERANCE {
                return Err(Error::Validation(format!(
                    "correlation matrix is not symmetric at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    let eigenvalue = SymmetricEigen::new(corr.clone()).eigenvalues.min();
    if eigenvalue < PSD_TOLERANCE {
        return Err(Error::NotPositiveSemiDefinite { eigenvalue });
    }
    Ok(())
}

/// Volatilities, correlations and expected returns of `n` risky assets.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetUniverse {
    vol: DVector<f64>,
    corr: DMatrix<f64>,
    cov: DMatrix<f64>,
    mu: Option<DVector<f64>>,
    rate: f64,
    excess: DVector<f64>,
}

impl AssetUniverse {
    pub fn from_vol_corr(vol: DVector<f64>, corr: DMatrix<f64>) -> Result<Self> {
        let cov = covariance(&vol, &corr)?;
        let n = vol.len();
        Ok(Self {
            vol,
            corr,
            cov,
            mu: None,
            rate: 0.0,
            excess: DVector::zeros(n),
        })
    }

    pub fn from_covariance(cov: DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        check_len("covariance columns", n, cov.ncols())?;
        let vol = DVector::from_fn(n, |i, _| cov[(i, i)].max(0.0).sqrt());
        validate_vol(&vol)?;
        for i in 0..n {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > MATRIX_TOLERANCE {
                    return Err(Error::Validation(format!(
                        "covariance matrix is not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let mut corr = DMatrix::from_fn(n, n, |i, j| cov[(i, j)] / (vol[i] * vol[j]));
        for i in 0..n {
            corr[(i, i)] = 1.0;
        }
        validate_correlation(&corr, n)?;
        Ok(Self {
            vol,
            corr,
            cov,
            mu: None,
            rate: 0.0,
            excess: DVector::zeros(n),
        })
    }

    /// Both presentations at once; they must describe the same matrix.
    pub fn from_vol_corr_and_covariance(
        vol: DVector<f64>,
        corr: DMatrix<f64>,
        cov: DMatrix<f64>,
    ) -> Result<Self> {
        let universe = Self::from_vol_corr(vol, corr)?;
        check_len("covariance rows", universe.len(), cov.nrows())?;
        check_len("covariance columns", universe.len(), cov.ncols())?;
        let diff = (&universe.cov - &cov).amax();
        if diff > MATRIX_TOLERANCE {
            return Err(Error::Validation(format!(
                "covariance input differs from vol/correlation input by {diff:.3e}"
            )));
        }
        Ok(universe)
    }

    pub fn with_expected_returns(mut self, mu: DVector<f64>) -> Result<Self> {
        check_len("expected returns", self.len(), mu.len())?;
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Validation("expected returns must be finite".into()));
        }
        self.mu = Some(mu);
        self.refresh_excess();
        Ok(self)
    }

    pub fn with_risk_free_rate(mut self, rate: f64) -> Result<Self> {
        if !rate.is_finite() {
            return Err(Error::Validation("risk-free rate must be finite".into()));
        }
        self.rate = rate;
        self.refresh_excess();
        Ok(self)
    }

    fn refresh_excess(&mut self) {
        self.excess = match &self.mu {
            Some(mu) => mu.map(|m| m - self.rate),
            None => DVector::zeros(self.vol.len()),
        };
    }

    /// Restriction to a subset of assets, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Validation(format!("asset index {bad} out of range")));
        }
        let k = indices.len();
        let vol = DVector::from_fn(k, |i, _| self.vol[indices[i]]);
        let corr = DMatrix::from_fn(k, k, |i, j| self.corr[(indices[i], indices[j])]);
        let cov = DMatrix::from_fn(k, k, |i, j| self.cov[(indices[i], indices[j])]);
        let mu = self
            .mu
            .as_ref()
            .map(|mu| DVector::from_fn(k, |i, _| mu[indices[i]]));
        let excess = DVector::from_fn(k, |i, _| self.excess[indices[i]]);
        Ok(Self {
            vol,
            corr,
            cov,
            mu,
            rate: self.rate,
            excess,
        })
    }

    pub fn len(&self) -> usize {
        self.vol.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vol.is_empty()
    }

    pub fn volatilities(&self) -> &DVector<f64> {
        &self.vol
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.corr
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Expected returns; defaults to the risk-free rate when none were given.
    pub fn expected_returns(&self) -> DVector<f64> {
        match &self.mu {
            Some(mu) => mu.clone(),
            None => DVector::from_element(self.len(), self.rate),
        }
    }

    pub fn has_expected_returns(&self) -> bool {
        self.mu.is_some()
    }

    pub fn risk_free_rate(&self) -> f64 {
        self.rate
    }

    /// `pi = mu - r`.
    pub fn excess_returns(&self) -> &DVector<f64> {
        &self.excess
    }

    pub fn has_excess_returns(&self) -> bool {
        self.excess.iter().any(|&p| p != 0.0)
    }
}

/// Trade-off scalar `c` between expected return and volatility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskParams {
    c: f64,
}

impl RiskParams {
    pub fn new(c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Validation(format!(
                "risk trade-off c must be non-negative, got {c}"
            )));
        }
        Ok(Self { c })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Existence warning when expected returns differ from the risk-free rate
    /// and `c` does not exceed the maximum Sharpe ratio.
    pub fn existence_warning(&self, universe: &AssetUniverse) -> Option<String> {
        if !universe.has_excess_returns() {
            return None;
        }
        let sr = estimate_max_sharpe(universe);
        (self.c <= sr).then(|| {
            format!(
                "c = {:.4} does not exceed the estimated maximum Sharpe ratio {:.4}; \
                 the risk budgeting portfolio may not exist or be unique",
                self.c, sr
            )
        })
    }
}

impl Default for RiskParams {
    fn default() -> Self {
        Self { c: 1.0 }
    }
}

/// Relative risk budgets: strictly positive and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Budgets(DVector<f64>);

impl Budgets {
    pub fn new(b: Vec<f64>) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::Validation("risk budgets are empty".into()));
        }
        for (i, &bi) in b.iter().enumerate() {
            if !bi.is_finite() || bi <= 0.0 {
                return Err(Error::Validation(format!(
                    "risk budget of asset {} must be strictly positive, got {bi}",
                    i + 1
                )));
            }
            if bi < MIN_BUDGET {
                return Err(Error::Validation(format!(
                    "risk budget of asset {} is {bi:e}, below the minimum {MIN_BUDGET:e}",
                    i + 1
                )));
            }
        }
        let sum: f64 = b.iter().sum();
        if (sum - 1.0).abs() > BUDGET_SUM_TOLERANCE {
            return Err(Error::Validation(format!(
                "risk budgets must sum to one, got {sum}"
            )));
        }
        Ok(Self(DVector::from_vec(b)))
    }

    pub fn equal(n: usize) -> Self {
        Self(DVector::from_element(n, 1.0 / n as f64))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn small_budget_warning(&self) -> Option<String> {
        let min = self.0.min();
        (min < SMALL_BUDGET_WARNING).then(|| {
            format!("smallest risk budget {min:e} is close to zero; convergence may be slow")
        })
    }
}

impl std::ops::Index<usize> for Budgets {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Portfolio weights, expressed as fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio(DVector<f64>);

impl Portfolio {
    pub fn new(weights: DVector<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation("portfolio weights must be finite".into()));
        }
        Ok(Self(weights))
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_weights(self) -> DVector<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.sum()
    }

    pub fn rescaled(&self) -> Self {
        Self(&self.0 / self.0.sum())
    }

    /// Two-way turnover `||x - x0||_1`.
    pub fn turnover(&self, from: &DVector<f64>) -> f64 {
        (&self.0 - from).lp_norm(1)
    }
}

/// Per-asset breakdown of the risk measure.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskDecomposition {
    /// Marginal risks `dR/dx_i`.
    pub mr: DVector<f64>,
    /// Absolute risk contributions `x_i * MR_i`.
    pub rc: DVector<f64>,
    /// Relative risk contributions `RC_i / R(x)`.
    pub rc_rel: DVector<f64>,
    pub risk: f64,
    pub vol: f64,
}

/// Portfolio volatility `sqrt(x' Sigma x)`.
pub fn volatility(x: &DVector<f64>, universe: &AssetUniverse) -> f64 {
    universe.cov.quad_form(x).max(0.0).sqrt()
}

trait QuadForm {
    fn quad_form(&self, x: &DVector<f64>) -> f64;
}

impl QuadForm for DMatrix<f64> {
    fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(self * x))
    }
}

/// `R(x) = -x'(mu - r) + c sqrt(x' Sigma x)`.
pub fn risk_measure(x: &DVector<f64>, universe: &AssetUniverse, params: &RiskParams) -> f64 {
    -x.dot(universe.excess_returns()) + params.c() * volatility(x, universe)
}

pub fn decompose(
    x: &DVector<f64>,
    universe: &AssetUniverse,
    params: &RiskParams,
) -> Result<RiskDecomposition> {
    check_len("portfolio", universe.len(), x.len())?;
    let sx = universe.covariance() * x;
    let vol = x.dot(&sx).max(0.0).sqrt();
    if vol <= 0.0 || !vol.is_finite() {
        return Err(Error::DegeneratePortfolio);
    }
    let mr = sx * (params.c() / vol) - universe.excess_returns();
    let rc = x.component_mul(&mr);
    let risk = rc.sum();
    let rc_rel = if risk != 0.0 {
        &rc / risk
    } else {
        DVector::zeros(x.len())
    };
    Ok(RiskDecomposition {
        mr,
        rc,
        rc_rel,
        risk,
        vol,
    })
}

fn sharpe(x: &DVector<f64>, excess: &DVector<f64>, cov: &DMatrix<f64>) -> Option<(f64, DVector<f64>)> {
    let sx = cov * x;
    let var = x.dot(&sx);
    if var <= 1e-300 {
        return None;
    }
    let vol = var.sqrt();
    let ret = x.dot(excess);
    let grad = excess / vol - sx * (ret / (vol * var));
    Some((ret / vol, grad))
}

/// Maximum Sharpe ratio over the long-only box `[0, 1]^n`, floored at zero.
///
/// Multi-start projected gradient ascent. The estimate only feeds the
/// existence warning, so it is never a hard failure.
pub fn estimate_max_sharpe(universe: &AssetUniverse) -> f64 {
    let excess = universe.excess_returns();
    if excess.iter().all(|&p| p == 0.0) {
        return 0.0;
    }
    let n = universe.len();
    let cov = universe.covariance();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5a8e);
    let mut starts = Vec::with_capacity(SHARPE_STARTS);
    starts.push(DVector::from_element(n, 0.5));
    for i in 0..n.min(SHARPE_STARTS - 1) {
        let mut e = DVector::from_element(n, 1e-3);
        e[i] = 1.0;
        starts.push(e);
    }
    while starts.len() < SHARPE_STARTS {
        starts.push(DVector::from_fn(n, |_, _| rng.gen_range(0.05..1.0)));
    }

    let mut best = 0.0_f64;
    for start in starts {
        if let Some(value) = ascend_sharpe(start, excess, cov) {
            best = best.max(value);
        }
    }
    best
}

fn ascend_sharpe(mut x: DVector<f64>, excess: &DVector<f64>, cov: &DMatrix<f64>) -> Option<f64> {
    let clamp = |v: DVector<f64>| v.map(|t| t.clamp(0.0, 1.0));
    let (mut value, mut grad) = sharpe(&x, excess, cov)?;
    let mut step = 1.0;
    for _ in 0..5000 {
        let mut accepted = None;
        let mut trial_step = step;
        for _ in 0..60 {
            let candidate = clamp(&x + &grad * trial_step);
            if let Some((v, g)) = sharpe(&candidate, excess, cov) {
                let moved = (&candidate - &x).norm_squared();
                if v >= value + 1e-4 * moved / trial_step {
                    accepted = Some((candidate, v, g, moved));
                    break;
                }
            }
            trial_step *= 0.5;
        }
        let Some((candidate, v, g, moved)) = accepted else {
            break;
        };
        // rescale inside the box; the ratio is invariant to positive scaling
        let peak = candidate.max();
        x = if peak > 0.0 { candidate / peak } else { candidate };
        value = v;
        grad = sharpe(&x, excess, cov).map(|(_, g)| g).unwrap_or(g);
        step = (trial_step * 2.0).min(1e6);
        if moved.sqrt() < 1e-13 {
            break;
        }
    }
    Some(value)
}
