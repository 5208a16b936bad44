use nalgebra::DVector;
use riskbudget::baselines::{least_squares_rb, with_simplex};
use riskbudget::{solve, StartPoint};
use serde::{Deserialize, Serialize};

use crate::cli::{invalid, SweepArgs, SweepFormat};
use crate::error::CliResult;
use crate::problem::{AssetRef, ConstraintSpec, Scenario};
use crate::report::{PortfolioSummary, ResultDocument};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SweepParam {
    LowerBound(String),
    Turnover,
}

impl std::str::FromStr for SweepParam {
    type Err = crate::error::CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.split_once(':') {
            Some(("lower-bound", asset)) if !asset.is_empty() => Ok(SweepParam::LowerBound(asset.to_string())),
            None if s == "turnover" => Ok(SweepParam::Turnover),
            _ => Err(invalid(format!("unknown sweep parameter `{s}` (expected lower-bound:<asset> or turnover)"))),
        }
    }
}

/// `start:stop:count`, both ends included.
pub fn parse_range(s: &str) -> CliResult<Vec<f64>> {
    let bad = || invalid(format!("invalid range `{s}` (expected start:stop:count)"));
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, k] = parts.as_slice() else {
        return Err(bad());
    };
    let (a, b): (f64, f64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
    let k: usize = k.parse().map_err(|_| bad())?;
    match k {
        0 => Err(bad()),
        1 => Ok(vec![a]),
        _ => Ok((0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub result: ResultDocument,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub least_squares: Option<PortfolioSummary>,
}

fn atoms_at(scenario: &Scenario, param: &SweepParam, value: f64) -> CliResult<Vec<ConstraintSpec>> {
    let mut specs = scenario.file.constraints.clone();
    match param {
        SweepParam::LowerBound(asset) => {
            let i = scenario.asset_index(asset)?;
            specs.push(ConstraintSpec::Bound {
                asset: AssetRef::Position(i + 1),
                lower: Some(value),
                upper: None,
            });
        }
        SweepParam::Turnover => {
            let mut found = false;
            for spec in specs.iter_mut() {
                if let ConstraintSpec::Turnover { tau, .. } = spec {
                    *tau = value;
                    found = true;
                }
            }
            if !found {
                specs.push(ConstraintSpec::Turnover { center: None, tau: value });
            }
        }
    }
    Ok(specs)
}

/// One solve per grid value, each warm-started from the previous solution.
pub fn sweep(scenario: &Scenario, param: &SweepParam, grid: &[f64], with_ls: bool) -> CliResult<Vec<SweepPoint>> {
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        return Err(invalid("the sweep grid must hold at least one finite value"));
    }
    let mut previous: Option<DVector<f64>> = None;
    let mut points = Vec::with_capacity(grid.len());
    for &value in grid {
        let (problem, reference) = scenario.variant(&atoms_at(scenario, param, value)?, "constraints")?;
        let mut options = scenario.options.clone();
        if let Some(x) = &previous {
            options.start = StartPoint::Custom(x.clone());
        }
        let report = solve(&problem, &options)?;
        previous = Some(report.weights().clone());
        let least_squares = if with_ls {
            let feasible = with_simplex(&problem.constraints)?;
            let ls = least_squares_rb(&problem.universe, &problem.params, &problem.budgets, &feasible, &scenario.ls)?;
            Some(PortfolioSummary::new(ls.portfolio.weights(), &ls.decomposition))
        } else {
            None
        };
        points.push(SweepPoint {
            value,
            result: ResultDocument::new(scenario.file.name.as_deref(), &scenario.names, &report, reference.as_ref()),
            least_squares,
        });
    }
    Ok(points)
}

pub fn csv(names: &[String], param: &str, points: &[SweepPoint]) -> CliResult<String> {
    let with_turnover = points.iter().any(|p| p.result.turnover.is_some());
    let with_ls = points.iter().any(|p| p.least_squares.is_some());
    let mut header = vec![param.to_string()];
    header.extend(names.iter().map(|n| format!("x_{n}")));
    header.extend(["sigma", "lambda", "lagrangian"].map(String::from));
    if with_turnover {
        header.push("turnover".into());
    }
    if with_ls {
        header.push("ls_sigma".into());
        header.extend(names.iter().map(|n| format!("ls_x_{n}")));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    let f = |v: f64| format!("{v:.6}");
    for p in points {
        let r = &p.result;
        let mut row = vec![f(p.value)];
        row.extend(r.assets.iter().map(|a| f(a.weight)));
        row.extend([f(r.volatility), f(r.lambda), f(r.lagrangian)]);
        if with_turnover {
            row.push(r.turnover.map(f).unwrap_or_default());
        }
        if let Some(ls) = &p.least_squares {
            row.push(f(ls.volatility));
            row.extend(ls.weights.iter().map(|&v| f(v)));
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::error::CliError::Output(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn run(args: &SweepArgs) -> CliResult<String> {
    let mut scenario = Scenario::load(&args.problem)?;
    scenario.apply(&args.solver.overrides())?;
    let param: SweepParam = args.param.parse()?;
    let grid = match &args.range {
        Some(r) => parse_range(r)?,
        None => args.values.clone(),
    };
    let points = sweep(&scenario, &param, &grid, args.with_ls)?;
    match args.format {
        SweepFormat::Csv => csv(&scenario.names, &args.param, &points),
        SweepFormat::Json => Ok(serde_json::to_string_pretty(&points)? + "\n"),
    }
}
