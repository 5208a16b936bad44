use rayon::prelude::*;
use riskbudget::baselines::{least_squares_rb, naive_two_step, with_simplex};
use riskbudget::{select_best, solve, Problem, SolveReport};
use serde::{Deserialize, Serialize};

use crate::cli::{invalid, CompareArgs};
use crate::error::CliResult;
use crate::problem::{parse_json, read_source, EncodingSpec, Scenario};
use crate::report::{grid_cells, two, PortfolioSummary, ResultDocument};

/// Tolerance for deciding whether the unconstrained portfolio breaks a bound.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingResult {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub group: Option<String>,
    /// Lowest Lagrangian value within its group.
    pub global_minimum: bool,
    pub result: ResultDocument,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveResult {
    /// Asset names held at their violated bound.
    pub pinned: Vec<String>,
    #[serde(flatten)]
    pub portfolio: PortfolioSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsResult {
    pub objective: f64,
    pub matched: bool,
    #[serde(flatten)]
    pub portfolio: PortfolioSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub assets: Vec<String>,
    pub encodings: Vec<EncodingResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub naive: Option<NaiveResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub least_squares: Option<LsResult>,
}

/// Encodings from `--encodings`, else from the file, else the file's own constraints.
pub fn encodings(scenario: &Scenario, path: Option<&str>) -> CliResult<Vec<EncodingSpec>> {
    if let Some(path) = path {
        let list: Vec<EncodingSpec> = parse_json(&read_source(path)?, path)?;
        if list.is_empty() {
            return Err(invalid(format!("{path}: no encodings listed")));
        }
        return Ok(list);
    }
    if !scenario.file.encodings.is_empty() {
        return Ok(scenario.file.encodings.clone());
    }
    Ok(vec![EncodingSpec {
        label: "constraints".into(),
        group: None,
        constraints: scenario.file.constraints.clone(),
    }])
}

fn naive(scenario: &Scenario) -> CliResult<NaiveResult> {
    let p = &scenario.problem;
    let free = solve(&Problem::unconstrained(p.universe.clone(), p.params, p.budgets.clone())?, &scenario.options)?;
    let (lo, hi) = p.constraints.bounds();
    let pins: Vec<(usize, f64)> = free
        .weights()
        .iter()
        .enumerate()
        .filter_map(|(i, &x)| {
            if x < lo[i] - BOUND_SLACK {
                Some((i, lo[i]))
            } else if x > hi[i] + BOUND_SLACK {
                Some((i, hi[i]))
            } else {
                None
            }
        })
        .collect();
    let sol = naive_two_step(&p.universe, &p.params, &p.budgets, &pins)?;
    Ok(NaiveResult {
        pinned: pins.iter().map(|&(i, _)| scenario.names[i].clone()).collect(),
        portfolio: PortfolioSummary::new(sol.portfolio.weights(), &sol.decomposition),
    })
}

fn least_squares(scenario: &Scenario) -> CliResult<LsResult> {
    let p = &scenario.problem;
    let feasible = with_simplex(&p.constraints)?;
    let sol = least_squares_rb(&p.universe, &p.params, &p.budgets, &feasible, &scenario.ls)?;
    Ok(LsResult {
        objective: sol.objective,
        matched: sol.matched,
        portfolio: PortfolioSummary::new(sol.portfolio.weights(), &sol.decomposition),
    })
}

pub fn compare(scenario: &Scenario, specs: &[EncodingSpec], with_ls: bool, with_naive: bool) -> CliResult<Comparison> {
    let solved: Vec<CliResult<(SolveReport, Option<nalgebra::DVector<f64>>)>> = specs
        .par_iter()
        .enumerate()
        .map(|(k, e)| {
            let (problem, reference) = scenario.variant(&e.constraints, &format!("encodings[{k}].constraints"))?;
            Ok((solve(&problem, &scenario.options)?, reference))
        })
        .collect();
    let solved: Vec<(SolveReport, Option<nalgebra::DVector<f64>>)> = solved.into_iter().collect::<CliResult<_>>()?;

    let mut best = vec![false; specs.len()];
    let mut groups: Vec<&Option<String>> = Vec::new();
    for e in specs {
        if !groups.contains(&&e.group) {
            groups.push(&e.group);
        }
    }
    for g in groups {
        let members: Vec<usize> = (0..specs.len()).filter(|&k| &specs[k].group == g).collect();
        let reports: Vec<SolveReport> = members.iter().map(|&k| solved[k].0.clone()).collect();
        best[members[select_best(&reports)?.best]] = true;
    }

    let encodings = specs
        .iter()
        .zip(&solved)
        .zip(best)
        .map(|((e, (report, reference)), global_minimum)| EncodingResult {
            label: e.label.clone(),
            group: e.group.clone(),
            global_minimum,
            result: ResultDocument::new(scenario.file.name.as_deref(), &scenario.names, report, reference.as_ref()),
        })
        .collect();
    Ok(Comparison {
        assets: scenario.names.clone(),
        encodings,
        naive: with_naive.then(|| naive(scenario)).transpose()?,
        least_squares: with_ls.then(|| least_squares(scenario)).transpose()?,
    })
}

struct Column<'a> {
    label: &'a str,
    weights: &'a [f64],
    rc: &'a [f64],
    volatility: f64,
    lagrangian: Option<f64>,
    global_minimum: Option<bool>,
}

impl<'a> Column<'a> {
    fn baseline(label: &'a str, p: &'a PortfolioSummary) -> Self {
        Column {
            label,
            weights: &p.weights,
            rc: &p.rc,
            volatility: p.volatility,
            lagrangian: None,
            global_minimum: None,
        }
    }
}

impl Comparison {
    /// Weights and risk contributions side by side, then volatility, Lagrangian and the selection flag.
    pub fn table(&self) -> String {
        let weights: Vec<Vec<f64>> = self.encodings.iter().map(|e| e.result.assets.iter().map(|a| a.weight).collect()).collect();
        let rc: Vec<Vec<f64>> = self.encodings.iter().map(|e| e.result.assets.iter().map(|a| a.rc).collect()).collect();
        let mut columns: Vec<Column> = self
            .encodings
            .iter()
            .zip(weights.iter().zip(&rc))
            .map(|(e, (w, r))| Column {
                label: &e.label,
                weights: w,
                rc: r,
                volatility: e.result.volatility,
                lagrangian: Some(e.result.lagrangian),
                global_minimum: Some(e.global_minimum),
            })
            .collect();
        if let Some(n) = &self.naive {
            columns.push(Column::baseline("naive", &n.portfolio));
        }
        if let Some(ls) = &self.least_squares {
            columns.push(Column::baseline("LS", &ls.portfolio));
        }
        let header: Vec<&str> = columns.iter().map(|c| c.label).collect();
        let block = |pick: for<'c> fn(&'c Column<'_>) -> &'c [f64]| -> Vec<(String, Vec<String>)> {
            self.assets
                .iter()
                .enumerate()
                .map(|(i, a)| (a.clone(), columns.iter().map(|c| two(pick(c)[i])).collect()))
                .collect()
        };
        let mut out = String::from("Weights x_i (in %)\n");
        out.push_str(&grid_cells("Asset", &header, &block(|c| c.weights)));
        out.push_str("\nRisk contributions RC_i (in %)\n");
        let mut rows = block(|c| c.rc);
        rows.push(("sigma(x)".into(), columns.iter().map(|c| two(c.volatility)).collect()));
        rows.push((
            "L(x*; lambda*)".into(),
            columns.iter().map(|c| c.lagrangian.map_or("-".into(), two)).collect(),
        ));
        rows.push((
            "Global minimum".into(),
            columns
                .iter()
                .map(|c| match c.global_minimum {
                    Some(true) => "yes".into(),
                    Some(false) => "no".into(),
                    None => "-".into(),
                })
                .collect(),
        ));
        out.push_str(&grid_cells("Asset", &header, &rows));
        if let Some(n) = &self.naive {
            out.push_str(&format!("naive pins: {}\n", n.pinned.join(", ")));
        }
        out
    }
}

pub fn run(args: &CompareArgs) -> CliResult<String> {
    let mut scenario = Scenario::load(&args.problem)?;
    scenario.apply(&args.solver.overrides())?;
    let specs = encodings(&scenario, args.encodings.as_deref())?;
    let comparison = compare(&scenario, &specs, args.with_ls, args.with_naive)?;
    if args.json {
        Ok(serde_json::to_string_pretty(&comparison)? + "\n")
    } else {
        Ok(comparison.table())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ProblemFile;

    const TEXT: &str = r#"{
        "assets": [{"name": "A", "vol": 10}, {"name": "B", "vol": 20}, {"name": "C", "vol": 30}],
        "correlation": [[40], [30, 50]],
        "constraints": [{"type": "box", "lower": [null, null, 25], "upper": 50}],
        "encodings": [
            {"label": "c >= 25", "group": "g", "constraints": [{"type": "linear", "coefficients": {"C": 1}, "op": ">=", "rhs": 25}]},
            {"label": "a + b <= 75", "group": "g", "constraints": [{"type": "linear", "coefficients": {"A": 1, "B": 1}, "op": "<=", "rhs": 75}]},
            {"label": "alone", "constraints": []}
        ]
    }"#;

    fn scenario() -> Scenario {
        Scenario::from_file(ProblemFile::parse(TEXT, "t").unwrap()).unwrap()
    }

    #[test]
    fn one_selection_per_group_in_input_order() {
        let s = scenario();
        let specs = encodings(&s, None).unwrap();
        let c = compare(&s, &specs, false, false).unwrap();
        let labels: Vec<&str> = c.encodings.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(labels, ["c >= 25", "a + b <= 75", "alone"]);
        let flags: Vec<bool> = c.encodings.iter().map(|e| e.global_minimum).collect();
        assert_eq!(flags.iter().filter(|&&f| f).count(), 2);
        assert!(flags[2]);
        let l: Vec<f64> = c.encodings.iter().take(2).map(|e| e.result.lagrangian).collect();
        assert_eq!(flags[0], l[0] <= l[1]);
    }

    #[test]
    fn baselines_follow_the_box() {
        let s = scenario();
        let single = vec![EncodingSpec {
            label: "box".into(),
            group: None,
            constraints: s.file.constraints.clone(),
        }];
        let c = compare(&s, &single, true, true).unwrap();
        assert!(c.encodings[0].global_minimum);
        let naive = c.naive.as_ref().unwrap();
        assert_eq!(naive.pinned, ["A", "C"]);
        assert!((naive.portfolio.weights[0] - 50.0).abs() < 1e-9);
        assert!((naive.portfolio.weights[2] - 25.0).abs() < 1e-9);
        let ls = c.least_squares.as_ref().unwrap();
        assert!(ls.portfolio.weights[2] >= 25.0 - 1e-6);
        let table = c.table();
        assert!(table.contains("naive") && table.contains("LS") && table.contains("Global minimum"));
    }
}
