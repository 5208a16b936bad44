//! The constraint set `Omega` and its projection.
//!
//! `Omega` is an intersection of atoms: boxes, affine equalities, linear
//! inequalities `Cx <= D` and l1 balls. The budget constraint `sum x = 1` is
//! never part of `Omega`; it is enforced by the outer loop on `lambda`.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::prox::{dykstra, validate_box, DykstraOptions, Projector};
use crate::qp::{solve_qp, LinearConstraints};

/// Default membership tolerance of [`ConstraintSet::contains`].
pub const MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    Box { lo: DVector<f64>, hi: DVector<f64> },
    AffineEq { a: DMatrix<f64>, b: DVector<f64> },
    /// `Cx <= D`; a `>=` row is stored negated.
    LinearIneq { c: DMatrix<f64>, d: DVector<f64> },
    L1Ball { center: DVector<f64>, radius: f64 },
}

impl Atom {
    fn kind(&self) -> &'static str {
        match self {
            Atom::Box { .. } => "box",
            Atom::AffineEq { .. } => "affine equality",
            Atom::LinearIneq { .. } => "linear inequality",
            Atom::L1Ball { .. } => "l1 ball",
        }
    }

    fn dim(&self) -> usize {
        match self {
            Atom::Box { lo, .. } => lo.len(),
            Atom::AffineEq { a, .. } => a.ncols(),
            Atom::LinearIneq { c, .. } => c.ncols(),
            Atom::L1Ball { center, .. } => center.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Atom::Box { lo, hi } => {
                check_len("box upper bounds", lo.len(), hi.len())?;
                validate_box(lo, hi)
            }
            Atom::AffineEq { a, b } => {
                check_len("equality right-hand side", a.nrows(), b.len())?;
                nonzero_rows(a, "equality")
            }
            Atom::LinearIneq { c, d } => {
                check_len("inequality right-hand side", c.nrows(), d.len())?;
                nonzero_rows(c, "inequality")
            }
            Atom::L1Ball { radius, center } => {
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::InvalidConstraint(format!(
                        "turnover limit must be non-negative, got {radius}"
                    )));
                }
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidConstraint("turnover center must be finite".into()));
                }
                Ok(())
            }
        }
    }

    fn projectors(&self) -> Result<Vec<Projector>> {
        Ok(match self {
            Atom::Box { lo, hi } => vec![Projector::boxed(lo.clone(), hi.clone())?],
            Atom::AffineEq { a, b } => vec![Projector::affine(a.clone(), b.clone())?],
            Atom::LinearIneq { c, d } => (0..c.nrows())
                .map(|i| Projector::halfspace(c.row(i).transpose(), d[i]))
                .collect::<Result<_>>()?,
            Atom::L1Ball { center, radius } => vec![Projector::l1_ball(center.clone(), *radius)?],
        })
    }

    /// Largest violation and the offending assets (box) or rows (others).
    fn residual(&self, x: &DVector<f64>, tol: f64) -> (f64, Vec<usize>) {
        match self {
            Atom::Box { lo, hi } => {
                let per: Vec<f64> = (0..x.len())
                    .map(|i| (lo[i] - x[i]).max(x[i] - hi[i]).max(0.0))
                    .collect();
                summarize(&per, tol)
            }
            Atom::AffineEq { a, b } => {
                let per: Vec<f64> = (a * x - b).iter().map(|r| r.abs()).collect();
                summarize(&per, tol)
            }
            Atom::LinearIneq { c, d } => {
                let per: Vec<f64> = (c * x - d).iter().map(|r| r.max(0.0)).collect();
                summarize(&per, tol)
            }
            Atom::L1Ball { center, radius } => {
                let excess = ((x - center).lp_norm(1) - radius).max(0.0);
                (excess, Vec::new())
            }
        }
    }
}

fn summarize(per: &[f64], tol: f64) -> (f64, Vec<usize>) {
    let worst = per.iter().copied().fold(0.0, f64::max);
    let offending = per
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > tol)
        .map(|(i, _)| i)
        .collect();
    (worst, offending)
}

fn nonzero_rows(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() == 0 {
        return Err(Error::InvalidConstraint(format!("{what} constraint has no rows")));
    }
    match (0..m.nrows()).find(|&i| m.row(i).iter().all(|&v| v == 0.0)) {
        Some(i) => Err(Error::InvalidConstraint(format!(
            "row {} of the {what} constraint is zero",
            i + 1
        ))),
        None if m.iter().any(|v| !v.is_finite()) => Err(Error::InvalidConstraint(format!(
            "{what} constraint has non-finite coefficients"
        ))),
        None => Ok(()),
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Box { .. } => write!(f, "box"),
            Atom::AffineEq { a, .. } => write!(f, "{} equality row(s)", a.nrows()),
            Atom::LinearIneq { c, .. } => write!(f, "{} inequality row(s)", c.nrows()),
            Atom::L1Ball { radius, .. } => write!(f, "turnover <= {radius}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledAtom {
    pub atom: Atom,
    /// The encoding as the user wrote it.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Separability {
    /// `Omega` is a single box (all box atoms merged).
    Separable { lo: DVector<f64>, hi: DVector<f64> },
    Coupled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomResidual {
    pub label: String,
    pub kind: &'static str,
    pub residual: f64,
    /// Asset indices for boxes, row indices otherwise.
    pub offending: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    pub atoms: Vec<AtomResidual>,
}

impl Feasibility {
    pub fn max_residual(&self) -> f64 {
        self.atoms.iter().map(|a| a.residual).fold(0.0, f64::max)
    }
}

/// Ordered intersection of constraint atoms over `n` assets.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    n: usize,
    atoms: Vec<LabeledAtom>,
    projectors: Vec<Projector>,
    dykstra: DykstraOptions,
}

impl ConstraintSet {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            atoms: Vec::new(),
            projectors: Vec::new(),
            dykstra: DykstraOptions::default(),
        }
    }

    pub fn with_dykstra_options(mut self, options: DykstraOptions) -> Self {
        self.dykstra = options;
        self
    }

    pub fn push(&mut self, atom: Atom, label: impl Into<String>) -> Result<()> {
        check_len("constraint dimension", self.n, atom.dim())?;
        atom.validate()?;
        self.projectors.extend(atom.projectors()?);
        self.atoms.push(LabeledAtom {
            atom,
            label: label.into(),
        });
        Ok(())
    }

    pub fn with(mut self, atom: Atom, label: impl Into<String>) -> Result<Self> {
        self.push(atom, label)?;
        Ok(self)
    }

    pub fn with_box(self, lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        self.with(Atom::Box { lo, hi }, "box")
    }

    /// One row `c'x <= d`.
    pub fn with_le(self, c: DVector<f64>, d: f64, label: impl Into<String>) -> Result<Self> {
        let atom = Atom::LinearIneq {
            c: DMatrix::from_row_slice(1, c.len(), c.as_slice()),
            d: DVector::from_element(1, d),
        };
        self.with(atom, label)
    }

    /// One row `c'x >= d`, stored as `-c'x <= -d`.
    pub fn with_ge(self, c: DVector<f64>, d: f64, label: impl Into<String>) -> Result<Self> {
        self.with_le(-c, -d, label)
    }

    pub fn with_eq(self, c: DVector<f64>, d: f64, label: impl Into<String>) -> Result<Self> {
        let atom = Atom::AffineEq {
            a: DMatrix::from_row_slice(1, c.len(), c.as_slice()),
            b: DVector::from_element(1, d),
        };
        self.with(atom, label)
    }

    pub fn with_turnover(self, center: DVector<f64>, radius: f64) -> Result<Self> {
        let label = format!("turnover <= {radius}");
        self.with(Atom::L1Ball { center, radius }, label)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[LabeledAtom] {
        &self.atoms
    }

    pub fn projectors(&self) -> &[Projector] {
        &self.projectors
    }

    pub fn has_l1_ball(&self) -> bool {
        self.atoms
            .iter()
            .any(|a| matches!(a.atom, Atom::L1Ball { .. }))
    }

    /// Intersection of the box atoms, `(-inf, inf)` where unconstrained.
    pub fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let mut lo = DVector::from_element(self.n, f64::NEG_INFINITY);
        let mut hi = DVector::from_element(self.n, f64::INFINITY);
        for a in &self.atoms {
            if let Atom::Box { lo: l, hi: h } = &a.atom {
                lo.zip_apply(l, |x, y| *x = x.max(y));
                hi.zip_apply(h, |x, y| *x = x.min(y));
            }
        }
        (lo, hi)
    }

    pub fn classify(&self) -> Separability {
        if self.atoms.iter().all(|a| matches!(a.atom, Atom::Box { .. })) {
            let (lo, hi) = self.bounds();
            Separability::Separable { lo, hi }
        } else {
            Separability::Coupled
        }
    }

    /// Euclidean projection onto `Omega`.
    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.project_with(v, &self.dykstra)
    }

    pub fn project_with(&self, v: &DVector<f64>, options: &DykstraOptions) -> Result<DVector<f64>> {
        check_len("projected vector", self.n, v.len())?;
        if let Separability::Separable { lo, hi } = self.classify() {
            if self.atoms.len() > 1 {
                validate_box(&lo, &hi)?;
            }
            return Ok(DVector::from_fn(self.n, |i, _| v[i].max(lo[i]).min(hi[i])));
        }
        dykstra(v, &self.projectors, options)
    }

    /// The same projection computed as one quadratic program.
    ///
    /// Only linear atoms have a QP form; an l1 ball is rejected.
    pub fn project_qp(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("projected vector", self.n, v.len())?;
        let lc = self.linear_constraints()?;
        Ok(solve_qp(DMatrix::identity(self.n, self.n), &-v, &lc)?.x)
    }

    /// Linear atoms in QP form: equalities and `>=` rows.
    pub fn linear_constraints(&self) -> Result<LinearConstraints> {
        let mut lc = LinearConstraints::new(self.n);
        for a in &self.atoms {
            match &a.atom {
                Atom::Box { lo, hi } => lc.push_box(lo, hi),
                Atom::AffineEq { a, b } => {
                    for i in 0..a.nrows() {
                        lc.push_eq(&a.row(i).transpose(), b[i]);
                    }
                }
                Atom::LinearIneq { c, d } => {
                    for i in 0..c.nrows() {
                        lc.push_le(&c.row(i).transpose(), d[i]);
                    }
                }
                Atom::L1Ball { .. } => {
                    return Err(Error::InvalidConstraint(
                        "an l1-ball constraint has no quadratic-program form".into(),
                    ))
                }
            }
        }
        Ok(lc)
    }

    pub fn contains(&self, x: &DVector<f64>) -> Feasibility {
        self.contains_tol(x, MEMBERSHIP_TOL)
    }

    pub fn contains_tol(&self, x: &DVector<f64>, tol: f64) -> Feasibility {
        let atoms: Vec<AtomResidual> = self
            .atoms
            .iter()
            .map(|a| {
                let (residual, offending) = a.atom.residual(x, tol);
                AtomResidual {
                    label: a.label.clone(),
                    kind: a.atom.kind(),
                    residual,
                    offending,
                }
            })
            .collect();
        Feasibility {
            feasible: atoms.iter().all(|a| a.residual <= tol),
            atoms,
        }
    }
}
