//! Result documents and fixed-layout text tables.
//!
//! Every reported quantity except iteration counts and residuals is in
//! percent.

use std::fmt::Write as _;

use nalgebra::DVector;
use riskbudget::{RiskDecomposition, SolveReport};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetResult {
    pub name: String,
    pub weight: f64,
    pub mr: f64,
    pub rc: f64,
    pub rc_rel: f64,
    /// Multiplier of the lower bound, when the constraint set is a box.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kkt_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kkt_upper: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationCounts {
    pub outer: usize,
    pub inner: usize,
    pub x_update: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub problem: Option<String>,
    pub algorithm: String,
    pub assets: Vec<AssetResult>,
    pub volatility: f64,
    pub risk: f64,
    pub lambda: f64,
    pub lagrangian: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub turnover: Option<f64>,
    pub iterations: IterationCounts,
    /// `|sum x - 1|`, as a fraction.
    pub budget_residual: f64,
    /// Largest constraint violation, as a fraction.
    pub feasibility_residual: f64,
    pub constraints: Vec<String>,
    pub warnings: Vec<String>,
}

impl ResultDocument {
    pub fn new(name: Option<&str>, names: &[String], report: &SolveReport, reference: Option<&DVector<f64>>) -> Self {
        let d = &report.decomposition;
        // multipliers are only meaningful when some bound exists
        let kkt = report.kkt.as_ref().filter(|_| !report.constraints.is_empty());
        let assets = names
            .iter()
            .enumerate()
            .map(|(i, name)| AssetResult {
                name: name.clone(),
                weight: 100.0 * report.weights()[i],
                mr: 100.0 * d.mr[i],
                rc: 100.0 * d.rc[i],
                rc_rel: 100.0 * d.rc_rel[i],
                kkt_lower: kkt.map(|k| 100.0 * k[i].lower),
                kkt_upper: kkt.map(|k| 100.0 * k[i].upper),
            })
            .collect();
        Self {
            problem: name.map(str::to_string),
            algorithm: report.algorithm.name().to_string(),
            assets,
            volatility: 100.0 * d.vol,
            risk: 100.0 * d.risk,
            lambda: 100.0 * report.lambda,
            lagrangian: 100.0 * report.lagrangian,
            turnover: reference.map(|x0| 100.0 * report.portfolio.turnover(x0)),
            iterations: IterationCounts {
                outer: report.iterations.outer,
                inner: report.iterations.inner,
                x_update: report.iterations.x_update,
            },
            budget_residual: report.budget_residual,
            feasibility_residual: report.feasibility_residual,
            constraints: report.constraints.clone(),
            warnings: report.warnings.clone(),
        }
    }

    /// Breakdown table `x_i, MR_i, RC_i, RC*_i` followed by the summary lines.
    pub fn table(&self) -> String {
        let mut out = String::new();
        if let Some(name) = &self.problem {
            let _ = writeln!(out, "{name}");
        }
        let _ = writeln!(out, "Volatility breakdown (in %), algorithm {}", self.algorithm);
        let with_kkt = self.assets.iter().any(|a| a.kkt_lower.is_some());
        let mut header = vec!["x_i", "MR_i", "RC_i", "RC*_i"];
        if with_kkt {
            header.extend(["lambda-_i", "lambda+_i"]);
        }
        let rows: Vec<(String, Vec<f64>)> = self
            .assets
            .iter()
            .map(|a| {
                let mut v = vec![a.weight, a.mr, a.rc, a.rc_rel];
                if with_kkt {
                    v.extend([a.kkt_lower.unwrap_or(0.0), a.kkt_upper.unwrap_or(0.0)]);
                }
                (a.name.clone(), v)
            })
            .collect();
        out.push_str(&grid("Asset", &header, &rows));
        let mut summary = vec![("sigma(x)", self.volatility), ("R(x)", self.risk), ("lambda*", self.lambda), ("L(x*; lambda*)", self.lagrangian)];
        if let Some(t) = self.turnover {
            summary.push(("turnover", t));
        }
        let width = summary.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in summary {
            let _ = writeln!(out, "{k:<width$}  {}", two(v));
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

/// Two decimals, never printing a negative zero.
pub fn two(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

/// Right-aligned two-decimal grid with a left label column.
pub fn grid(corner: &str, header: &[&str], rows: &[(String, Vec<f64>)]) -> String {
    let cells: Vec<(String, Vec<String>)> = rows
        .iter()
        .map(|(l, v)| (l.clone(), v.iter().map(|&x| two(x)).collect()))
        .collect();
    grid_cells(corner, header, &cells)
}

/// Right-aligned text grid; every column is at least six characters wide.
pub fn grid_cells(corner: &str, header: &[&str], rows: &[(String, Vec<String>)]) -> String {
    let label_width = rows.iter().map(|(l, _)| l.len()).chain([corner.len()]).max().unwrap_or(0);
    let widths: Vec<usize> = header
        .iter()
        .enumerate()
        .map(|(j, h)| rows.iter().map(|(_, r)| r[j].len()).chain([h.len(), 6]).max().unwrap_or(6))
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{corner:<label_width$}");
    for (h, w) in header.iter().zip(&widths) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    for (label, row) in rows {
        let _ = write!(out, "{label:<label_width$}");
        for (c, w) in row.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
    }
    out
}

/// Weights and decomposition of a portfolio that did not come from [`riskbudget::solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSummary {
    pub weights: Vec<f64>,
    pub rc: Vec<f64>,
    pub rc_rel: Vec<f64>,
    pub volatility: f64,
}

impl PortfolioSummary {
    pub fn new(x: &DVector<f64>, d: &RiskDecomposition) -> Self {
        let pct = |v: &DVector<f64>| v.iter().map(|x| 100.0 * x).collect();
        Self {
            weights: pct(x),
            rc: pct(&d.rc),
            rc_rel: pct(&d.rc_rel),
            volatility: 100.0 * d.vol,
        }
    }
}
