//! Problem files.
//!
//! A problem file is a JSON document holding the universe, the risk budgets,
//! the constraint set and optional solver settings. Weights, volatilities,
//! returns, budgets, correlations and right-hand sides are all written in
//! percent; covariances in squared percent. Values are converted to
//! fractions when the file is validated.

use std::collections::BTreeMap;
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use riskbudget::baselines::LsOptions;
use riskbudget::prox::DykstraOptions;
use riskbudget::solvers::AdaptivePenalty;
use riskbudget::{Algorithm, AssetUniverse, Budgets, ConstraintSet, Problem, RiskParams, SolverOptions, StartPoint};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Symmetry tolerance of a correlation or covariance given in full, in percent units.
const SYMMETRY_TOL: f64 = 1e-9;
/// Budgets must add up to 100% within this many percentage points.
const BUDGET_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub assets: Vec<AssetSpec>,
    /// Full matrix or lower-triangular rows, with or without the diagonal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    /// Full matrix or lower-triangular rows including the diagonal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<RiskSpec>,
    #[serde(default)]
    pub budgets: BudgetSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<ConstraintSpec>,
    /// Alternative constraint sets for `compare`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub encodings: Vec<EncodingSpec>,
    /// Benchmark (capitalization) weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<Vec<f64>>,
    /// Portfolio currently held; turnover is reported against it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub least_squares: Option<LsSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskSpec {
    /// Risk-free rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Volatility multiplier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetKeyword {
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BudgetSpec {
    Keyword(BudgetKeyword),
    Percent(Vec<f64>),
}

impl Default for BudgetSpec {
    fn default() -> Self {
        BudgetSpec::Keyword(BudgetKeyword::Equal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundSpec {
    All(f64),
    /// One entry per asset; `null` leaves the asset unbounded on that side.
    PerAsset(Vec<Option<f64>>),
}

/// An asset given by name or by 1-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AssetRef {
    Position(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficients {
    Dense(Vec<f64>),
    /// Asset name to coefficient; missing assets get zero.
    Named(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl Op {
    fn symbol(self) -> &'static str {
        match self {
            Op::Eq => "=",
            Op::Le => "<=",
            Op::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ConstraintSpec {
    Box {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lower: Option<BoundSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<BoundSpec>,
    },
    Bound {
        asset: AssetRef,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lower: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<f64>,
    },
    Linear {
        coefficients: Coefficients,
        op: Op,
        rhs: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    /// Two-way turnover `sum |x_i - center_i| <= tau`; the center defaults to `current`.
    Turnover {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        tau: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingSpec {
    pub label: String,
    /// Encodings sharing a group are ranked against each other.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartKeyword {
    /// Naive risk parity `b_i / sigma_i`.
    Rp,
    /// Equal weights.
    Ew,
    /// The benchmark weights.
    Cw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartSpec {
    Keyword(StartKeyword),
    Percent(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_prime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DykstraSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stall_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_update_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<PenaltySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    /// Multipliers `[m_a, m_b]` of the initial lambda bracket.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accelerated: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<StartSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dykstra: Option<DykstraSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

/// Reads `path`, or standard input when `path` is `-`.
pub fn read_source(path: &str) -> CliResult<String> {
    let io = |source| CliError::Io {
        path: path.to_string(),
        source,
    };
    if path == "-" {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text).map_err(io)?;
        Ok(text)
    } else {
        std::fs::read_to_string(path).map_err(io)
    }
}

/// Deserializes JSON, reporting the offending field path with line and column.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> CliResult<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let parse_error = |path: String, e: serde_json::Error| CliError::Parse {
        path: origin.to_string(),
        message: if path.is_empty() || path == "." {
            e.to_string()
        } else {
            format!("field `{path}`: {e}")
        },
    };
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        parse_error(path, e.into_inner())
    })?;
    de.end().map_err(|e| parse_error(String::new(), e))?;
    Ok(value)
}

impl ProblemFile {
    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        parse_json(text, origin)
    }

    pub fn load(path: &str) -> CliResult<Self> {
        let origin = if path == "-" { "<stdin>" } else { path };
        Self::parse(&read_source(path)?, origin)
    }

    pub fn emit(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }
}

/// Settings given on the command line; they take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub algorithm: Option<Algorithm>,
    pub lambda_tol: Option<f64>,
    pub phi: Option<f64>,
    pub no_adaptive: bool,
    pub start: Option<StartKeyword>,
}

/// A validated problem file, converted to fractions.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ProblemFile,
    pub names: Vec<String>,
    pub problem: Problem,
    pub options: SolverOptions,
    pub ls: LsOptions,
    pub benchmark: Option<DVector<f64>>,
    pub current: Option<DVector<f64>>,
    /// Portfolio that realized turnover is measured against.
    pub reference: Option<DVector<f64>>,
}

fn field(path: &str, message: impl std::fmt::Display) -> CliError {
    CliError::input(format!("field `{path}`: {message}"))
}

fn percent(v: &[f64]) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().map(|x| x / 100.0))
}

fn weights_field(path: &str, v: &[f64], n: usize) -> CliResult<DVector<f64>> {
    if v.len() != n {
        return Err(field(path, format!("expected {n} entries, found {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(field(path, "entries must be finite"));
    }
    Ok(percent(v))
}

/// Symmetric matrix from a full matrix or lower-triangular rows.
fn symmetric(path: &str, rows: &[Vec<f64>], n: usize, unit_diagonal: bool) -> CliResult<DMatrix<f64>> {
    let lengths: Vec<usize> = rows.iter().map(Vec::len).collect();
    let full = rows.len() == n && lengths.iter().all(|&l| l == n);
    let with_diagonal = rows.len() == n && lengths.iter().enumerate().all(|(i, &l)| l == i + 1);
    let strict = unit_diagonal && n > 1 && rows.len() == n - 1 && lengths.iter().enumerate().all(|(i, &l)| l == i + 1);
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(field(path, "entries must be finite"));
    }
    let mut m = DMatrix::identity(n, n) * if unit_diagonal { 100.0 } else { 0.0 };
    if full {
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if (v - rows[j][i]).abs() > SYMMETRY_TOL {
                    return Err(field(path, format!("matrix is not symmetric at ({}, {})", i + 1, j + 1)));
                }
                m[(i, j)] = v;
            }
        }
    } else if with_diagonal || strict {
        let offset = usize::from(strict);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m[(i + offset, j)] = v;
                m[(j, i + offset)] = v;
            }
        }
    } else {
        let shapes = if unit_diagonal {
            "a full matrix or lower-triangular rows with or without the diagonal"
        } else {
            "a full matrix or lower-triangular rows including the diagonal"
        };
        return Err(field(path, format!("expected {shapes} for {n} assets")));
    }
    Ok(m)
}

fn resolve_asset(path: &str, asset: &AssetRef, names: &[String]) -> CliResult<usize> {
    match asset {
        AssetRef::Position(p) if (1..=names.len()).contains(p) => Ok(p - 1),
        AssetRef::Position(p) => Err(field(path, format!("asset position {p} is outside 1..={}", names.len()))),
        AssetRef::Name(name) => names
            .iter()
            .position(|n| n == name)
            .or_else(|| name.parse::<usize>().ok().filter(|p| (1..=names.len()).contains(p)).map(|p| p - 1))
            .ok_or_else(|| field(path, format!("unknown asset `{name}`"))),
    }
}

fn bound_vector(path: &str, spec: &Option<BoundSpec>, n: usize, default: f64) -> CliResult<DVector<f64>> {
    match spec {
        None => Ok(DVector::from_element(n, default)),
        Some(BoundSpec::All(v)) => Ok(DVector::from_element(n, v / 100.0)),
        Some(BoundSpec::PerAsset(values)) => {
            if values.len() != n {
                return Err(field(path, format!("expected {n} entries, found {}", values.len())));
            }
            Ok(DVector::from_iterator(n, values.iter().map(|v| v.map_or(default, |b| b / 100.0))))
        }
    }
}

fn row_label(c: &DVector<f64>, names: &[String], op: Op, rhs: f64) -> String {
    let terms: Vec<String> = c
        .iter()
        .zip(names)
        .filter(|(v, _)| **v != 0.0)
        .enumerate()
        .map(|(k, (&v, name))| {
            let sign = match (k, v < 0.0) {
                (0, true) => "-",
                (0, false) => "",
                (_, true) => " - ",
                (_, false) => " + ",
            };
            let magnitude = v.abs();
            if magnitude == 1.0 {
                format!("{sign}{name}")
            } else {
                format!("{sign}{magnitude}*{name}")
            }
        })
        .collect();
    format!("{} {} {}%", terms.concat(), op.symbol(), rhs)
}

/// Constraint set built from a list of atoms, with the turnover center if any.
pub fn build_constraints(
    specs: &[ConstraintSpec],
    prefix: &str,
    names: &[String],
    current: Option<&DVector<f64>>,
    dykstra: DykstraOptions,
) -> CliResult<(ConstraintSet, Option<DVector<f64>>)> {
    let n = names.len();
    let mut lo = DVector::zeros(n);
    let mut hi = DVector::from_element(n, f64::INFINITY);
    let mut has_box = false;
    let mut rows = Vec::new();
    let mut turnover = Vec::new();
    for (k, spec) in specs.iter().enumerate() {
        let path = format!("{prefix}[{k}]");
        match spec {
            ConstraintSpec::Box { lower, upper } => {
                has_box = true;
                let l = bound_vector(&format!("{path}.lower"), lower, n, 0.0)?;
                let h = bound_vector(&format!("{path}.upper"), upper, n, f64::INFINITY)?;
                lo = lo.sup(&l);
                hi = hi.inf(&h);
            }
            ConstraintSpec::Bound { asset, lower, upper } => {
                has_box = true;
                let i = resolve_asset(&format!("{path}.asset"), asset, names)?;
                if let Some(l) = lower {
                    lo[i] = lo[i].max(l / 100.0);
                }
                if let Some(h) = upper {
                    hi[i] = hi[i].min(h / 100.0);
                }
            }
            ConstraintSpec::Linear {
                coefficients,
                op,
                rhs,
                label,
            } => {
                let c = match coefficients {
                    Coefficients::Dense(v) => {
                        if v.len() != n {
                            return Err(field(
                                &format!("{path}.coefficients"),
                                format!("expected {n} entries, found {}", v.len()),
                            ));
                        }
                        DVector::from_column_slice(v)
                    }
                    Coefficients::Named(map) => {
                        let mut c = DVector::zeros(n);
                        for (name, v) in map {
                            let i = resolve_asset(&format!("{path}.coefficients"), &AssetRef::Name(name.clone()), names)?;
                            c[i] += v;
                        }
                        c
                    }
                };
                if c.iter().any(|v| !v.is_finite()) || !rhs.is_finite() {
                    return Err(field(&path, "coefficients and rhs must be finite"));
                }
                let first = c[0];
                if *op == Op::Eq && first != 0.0 && c.iter().all(|&v| v == first) && (rhs / first - 100.0).abs() < 1e-9 {
                    return Err(field(
                        &path,
                        "the full-investment constraint sum x = 100% is always imposed and must not be listed",
                    ));
                }
                let label = label.clone().unwrap_or_else(|| row_label(&c, names, *op, *rhs));
                rows.push((c, *op, rhs / 100.0, label));
            }
            ConstraintSpec::Turnover { center, tau } => {
                let center = match center {
                    Some(v) => weights_field(&format!("{path}.center"), v, n)?,
                    None => current
                        .cloned()
                        .ok_or_else(|| field(&path, "turnover needs a `center` or a top-level `current` portfolio"))?,
                };
                if !(*tau >= 0.0 && tau.is_finite()) {
                    return Err(field(&format!("{path}.tau"), "must be a non-negative number"));
                }
                turnover.push((center, tau / 100.0));
            }
        }
    }

    let mut set = ConstraintSet::new(n).with_dykstra_options(dykstra);
    if has_box {
        set = set.with_box(lo, hi)?;
    }
    for (c, op, rhs, label) in rows {
        set = match op {
            Op::Eq => set.with_eq(c, rhs, label)?,
            Op::Le => set.with_le(c, rhs, label)?,
            Op::Ge => set.with_ge(c, rhs, label)?,
        };
    }
    let center = turnover.first().map(|(c, _)| c.clone());
    for (c, tau) in turnover {
        set = set.with_turnover(c, tau)?;
    }
    Ok((set, center))
}

fn universe(file: &ProblemFile) -> CliResult<AssetUniverse> {
    let n = file.assets.len();
    let vols: Option<Vec<f64>> = file.assets.iter().map(|a| a.vol).collect();
    let vol = vols.as_deref().map(percent);
    let corr = file
        .correlation
        .as_ref()
        .map(|rows| symmetric("correlation", rows, n, true).map(|m| m / 100.0))
        .transpose()?;
    let cov = file
        .covariance
        .as_ref()
        .map(|rows| symmetric("covariance", rows, n, false).map(|m| m / 1e4))
        .transpose()?;
    let missing_vol = || field("assets", "every asset needs `vol` when a correlation matrix is given");
    let universe = match (corr, cov) {
        (Some(corr), Some(cov)) => AssetUniverse::from_vol_corr_and_covariance(vol.ok_or_else(missing_vol)?, corr, cov)?,
        (Some(corr), None) => AssetUniverse::from_vol_corr(vol.ok_or_else(missing_vol)?, corr)?,
        (None, Some(cov)) => match vol {
            Some(vol) => {
                let sd = cov.diagonal().map(f64::sqrt);
                let corr = DMatrix::from_fn(n, n, |i, j| cov[(i, j)] / (sd[i] * sd[j]));
                AssetUniverse::from_vol_corr_and_covariance(vol, corr, cov)?
            }
            None => AssetUniverse::from_covariance(cov)?,
        },
        (None, None) if n == 1 => AssetUniverse::from_vol_corr(vol.ok_or_else(missing_vol)?, DMatrix::identity(1, 1))?,
        (None, None) => return Err(CliError::input("either `correlation` or `covariance` is required")),
    };
    let mus: Vec<Option<f64>> = file.assets.iter().map(|a| a.mu).collect();
    let universe = if mus.iter().all(Option::is_none) {
        universe
    } else {
        let mu: Option<Vec<f64>> = mus.into_iter().collect();
        let mu = mu.ok_or_else(|| field("assets", "`mu` must be given for every asset or for none"))?;
        universe.with_expected_returns(percent(&mu))?
    };
    match file.risk.as_ref().and_then(|r| r.r) {
        Some(r) => Ok(universe.with_risk_free_rate(r / 100.0)?),
        None => Ok(universe),
    }
}

fn budgets(spec: &BudgetSpec, n: usize) -> CliResult<Budgets> {
    match spec {
        BudgetSpec::Keyword(BudgetKeyword::Equal) => Ok(Budgets::equal(n)),
        BudgetSpec::Percent(b) => {
            if b.len() != n {
                return Err(field("budgets", format!("expected {n} entries, found {}", b.len())));
            }
            let total: f64 = b.iter().sum();
            if !((total - 100.0).abs() <= BUDGET_SUM_TOL) {
                return Err(field("budgets", format!("budgets add up to {total}%, expected 100%")));
            }
            Ok(Budgets::new(b.iter().map(|v| v / total).collect())?)
        }
    }
}

fn start_point(spec: &StartSpec, benchmark: Option<&DVector<f64>>, n: usize) -> CliResult<StartPoint> {
    Ok(match spec {
        StartSpec::Keyword(StartKeyword::Rp) => StartPoint::NaiveRiskParity,
        StartSpec::Keyword(StartKeyword::Ew) => StartPoint::EqualWeight,
        StartSpec::Keyword(StartKeyword::Cw) => StartPoint::Custom(
            benchmark
                .cloned()
                .ok_or_else(|| field("solver.start", "`cw` needs benchmark weights"))?,
        ),
        StartSpec::Percent(v) => StartPoint::Custom(weights_field("solver.start", v, n)?),
    })
}

fn solver_options(spec: &SolverSpec, benchmark: Option<&DVector<f64>>, n: usize) -> CliResult<SolverOptions> {
    let mut o = SolverOptions::default();
    if let Some(name) = &spec.algorithm {
        o.algorithm = name.parse().map_err(|e| field("solver.algorithm", e))?;
    }
    o.inner_tol = spec.inner_tol.unwrap_or(o.inner_tol);
    o.lambda_tol = spec.lambda_tol.unwrap_or(o.lambda_tol);
    o.x_update_tol = spec.x_update_tol.unwrap_or(o.x_update_tol);
    o.phi0 = spec.phi.unwrap_or(o.phi0);
    o.adaptive = spec.adaptive.unwrap_or(o.adaptive);
    o.max_iter = spec.max_iter.unwrap_or(o.max_iter);
    o.accelerated = spec.accelerated.unwrap_or(o.accelerated);
    if let Some([a, b]) = spec.bracket {
        o.bracket_lower = a;
        o.bracket_upper = b;
    }
    if let Some(p) = &spec.penalty {
        let d = AdaptivePenalty::default();
        o.penalty = AdaptivePenalty {
            mu: p.mu.unwrap_or(d.mu),
            tau: p.tau.unwrap_or(d.tau),
            tau_prime: p.tau_prime.unwrap_or(d.tau_prime),
        };
    }
    if let Some(d) = &spec.dykstra {
        o.dykstra = DykstraOptions {
            max_iter: d.max_iter.unwrap_or(o.dykstra.max_iter),
            tol: d.tol.unwrap_or(o.dykstra.tol),
            stall_tol: d.stall_tol.unwrap_or(o.dykstra.stall_tol),
        };
    }
    if let Some(start) = &spec.start {
        o.start = start_point(start, benchmark, n)?;
    }
    o.validate().map_err(|e| field("solver", e))?;
    Ok(o)
}

impl Scenario {
    pub fn from_file(file: ProblemFile) -> CliResult<Self> {
        let n = file.assets.len();
        if n == 0 {
            return Err(field("assets", "at least one asset is required"));
        }
        let names: Vec<String> = file.assets.iter().map(|a| a.name.clone()).collect();
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(field(&format!("assets[{i}].name"), format!("duplicate asset name `{name}`")));
            }
        }
        let universe = universe(&file)?;
        let params = RiskParams::new(file.risk.as_ref().and_then(|r| r.c).unwrap_or(1.0))?;
        let budgets = budgets(&file.budgets, n)?;
        let benchmark = file.benchmark.as_deref().map(|v| weights_field("benchmark", v, n)).transpose()?;
        let current = file.current.as_deref().map(|v| weights_field("current", v, n)).transpose()?;
        let options = solver_options(&file.solver.clone().unwrap_or_default(), benchmark.as_ref(), n)?;
        let (constraints, center) = build_constraints(&file.constraints, "constraints", &names, current.as_ref(), options.dykstra)?;
        let ls_spec = file.least_squares.clone().unwrap_or_default();
        let d = LsOptions::default();
        let ls = LsOptions {
            starts: ls_spec.starts.unwrap_or(d.starts),
            seed: ls_spec.seed.unwrap_or(d.seed),
            max_iter: ls_spec.max_iter.unwrap_or(d.max_iter),
            tol: ls_spec.tol.unwrap_or(d.tol),
            benchmark: benchmark.clone(),
        };
        for (k, e) in file.encodings.iter().enumerate() {
            build_constraints(&e.constraints, &format!("encodings[{k}].constraints"), &names, current.as_ref(), options.dykstra)?;
        }
        Ok(Self {
            reference: current.clone().or(center),
            problem: Problem::new(universe, params, budgets, constraints)?,
            file,
            names,
            options,
            ls,
            benchmark,
            current,
        })
    }

    pub fn load(path: &str) -> CliResult<Self> {
        Self::from_file(ProblemFile::load(path)?)
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn apply(&mut self, overrides: &Overrides) -> CliResult<()> {
        if let Some(a) = overrides.algorithm {
            self.options.algorithm = a;
        }
        if let Some(t) = overrides.lambda_tol {
            self.options.lambda_tol = t;
        }
        if let Some(phi) = overrides.phi {
            self.options.phi0 = phi;
        }
        if overrides.no_adaptive {
            self.options.adaptive = false;
        }
        if let Some(s) = overrides.start {
            self.options.start = start_point(&StartSpec::Keyword(s), self.benchmark.as_ref(), self.n())?;
        }
        self.options.validate()?;
        Ok(())
    }

    /// The same universe and budgets under another list of atoms.
    pub fn variant(&self, specs: &[ConstraintSpec], prefix: &str) -> CliResult<(Problem, Option<DVector<f64>>)> {
        let (set, center) = build_constraints(specs, prefix, &self.names, self.current.as_ref(), self.options.dykstra)?;
        let reference = self.current.clone().or(center);
        Ok((self.problem.with_constraints(set)?, reference))
    }

    /// Index of an asset given by name or 1-based position.
    pub fn asset_index(&self, asset: &str) -> CliResult<usize> {
        resolve_asset("asset", &AssetRef::Name(asset.to_string()), &self.names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FOUR: &str = r#"{
        "name": "four assets",
        "assets": [
            {"name": "A1", "vol": 10}, {"name": "A2", "vol": 15},
            {"name": "A3", "vol": 20}, {"name": "A4", "vol": 30}
        ],
        "correlation": [[50], [50, 50], [50, 50, 75]],
        "budgets": [30, 30, 19.5, 20.5],
        "constraints": [
            {"type": "box", "upper": 40},
            {"type": "bound", "asset": "A4", "lower": 5},
            {"type": "linear", "coefficients": {"A1": 1, "A2": 1}, "op": "<=", "rhs": 75}
        ],
        "solver": {"algorithm": "admm-ccd", "start": "ew", "penalty": {"tau": 3}}
    }"#;

    #[test]
    fn round_trip_is_identical() {
        let file = ProblemFile::parse(FOUR, "four.json").unwrap();
        let again = ProblemFile::parse(&file.emit(), "emitted").unwrap();
        assert_eq!(file, again);
        let (a, b) = (Scenario::from_file(file).unwrap(), Scenario::from_file(again).unwrap());
        assert_eq!(a.problem.universe.covariance(), b.problem.universe.covariance());
        assert_eq!(a.problem.constraints, b.problem.constraints);
        assert_eq!(a.options, b.options);
    }

    #[test]
    fn lower_rows_full_matrix_and_strict_rows_agree() {
        let lower = symmetric("c", &[vec![100.0], vec![50.0, 100.0]], 2, true).unwrap();
        let strict = symmetric("c", &[vec![50.0]], 2, true).unwrap();
        let full = symmetric("c", &[vec![100.0, 50.0], vec![50.0, 100.0]], 2, true).unwrap();
        assert_eq!(lower, full);
        assert_eq!(strict, full);
        assert!(symmetric("c", &[vec![100.0, 40.0], vec![50.0, 100.0]], 2, true).is_err());
        assert!(symmetric("c", &[vec![1.0, 2.0]], 3, true).is_err());
    }

    #[test]
    fn fields_are_converted_from_percent() {
        let s = Scenario::from_file(ProblemFile::parse(FOUR, "four.json").unwrap()).unwrap();
        assert!((s.problem.universe.covariance()[(0, 1)] - 0.5 * 0.10 * 0.15).abs() < 1e-15);
        assert!((s.problem.budgets[2] - 0.195).abs() < 1e-15);
        assert_eq!(s.options.algorithm, Algorithm::AdmmCcd);
        assert_eq!(s.options.start, StartPoint::EqualWeight);
        assert_eq!(s.options.penalty.tau, 3.0);
        assert!(s.problem.constraints.contains(&DVector::from_vec(vec![0.3, 0.3, 0.2, 0.2])).feasible);
        assert!(!s.problem.constraints.contains(&DVector::from_vec(vec![0.4, 0.4, 0.1, 0.1])).feasible);
        assert!(!s.problem.constraints.contains(&DVector::from_vec(vec![0.3, 0.3, 0.38, 0.02])).feasible);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let text = FOUR.replace(r#""penalty""#, r#""penalti""#);
        let err = ProblemFile::parse(&text, "four.json").unwrap_err().to_string();
        assert!(err.contains("solver") && err.contains("penalti") && err.contains("line"), "{err}");
        let text = FOUR.replace(r#""op": "<=""#, r#""op": "<""#);
        let err = ProblemFile::parse(&text, "four.json").unwrap_err().to_string();
        assert!(err.contains("constraints[2]"), "{err}");
    }

    #[test]
    fn explicit_budget_row_is_rejected() {
        let text = FOUR.replace(
            r#"{"A1": 1, "A2": 1}, "op": "<=", "rhs": 75"#,
            r#"[2, 2, 2, 2], "op": "=", "rhs": 200"#,
        );
        let err = Scenario::from_file(ProblemFile::parse(&text, "f").unwrap()).unwrap_err();
        assert!(err.to_string().contains("constraints[2]"), "{err}");
    }

    #[test]
    fn invalid_inputs_are_input_errors() {
        let cases = [
            FOUR.replace("[30, 30, 19.5, 20.5]", "[30, 30, 19.5, 21.5]"),
            FOUR.replace(r#""asset": "A4""#, r#""asset": "A9""#),
            FOUR.replace("[[50], [50, 50], [50, 50, 75]]", "[[99], [99, 99], [99, -99, 75]]"),
            FOUR.replace(r#""admm-ccd""#, r#""simplex""#),
            FOUR.replace(r#"{"name": "A4", "vol": 30}"#, r#"{"name": "A1", "vol": 30}"#),
        ];
        for text in cases {
            let err = Scenario::from_file(ProblemFile::parse(&text, "f").unwrap()).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{err}");
        }
    }

    #[test]
    fn single_asset_needs_no_correlation() {
        let s = Scenario::from_file(ProblemFile::parse(r#"{"assets": [{"name": "A", "vol": 12}]}"#, "f").unwrap()).unwrap();
        assert_eq!(s.n(), 1);
    }

    #[test]
    fn row_labels_read_naturally() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let c = DVector::from_vec(vec![-1.0, 0.0, 2.0]);
        assert_eq!(row_label(&c, &names, Op::Ge, 5.0), "-a + 2*c >= 5%");
    }
}
