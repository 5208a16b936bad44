//! Dense strictly convex quadratic programs by a dual active-set method.
//!
//! Solves `min 1/2 x'Gx + a'x` subject to `C_eq x = d_eq` and `C_ge x >= d_ge`
//! with `G` positive definite. The method starts from the unconstrained
//! minimizer and adds violated constraints one at a time while keeping the
//! active multipliers dual feasible, dropping constraints whose multiplier
//! would turn negative. `G` and the constraint rows are factored once, so
//! repeated solves with different linear terms are cheap.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_len, Error, Result};

/// Linear constraints in the form `C_eq x = d_eq`, `C_ge x >= d_ge`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraints {
    pub eq: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ge: DMatrix<f64>,
    pub ge_rhs: DVector<f64>,
}

impl LinearConstraints {
    pub fn new(n: usize) -> Self {
        Self {
            eq: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ge: DMatrix::zeros(0, n),
            ge_rhs: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.eq.ncols()
    }

    pub fn push_eq(&mut self, row: &DVector<f64>, rhs: f64) {
        append_row(&mut self.eq, &mut self.eq_rhs, row, rhs);
    }

    pub fn push_ge(&mut self, row: &DVector<f64>, rhs: f64) {
        append_row(&mut self.ge, &mut self.ge_rhs, row, rhs);
    }

    /// `c'x <= d`, stored as `-c'x >= -d`.
    pub fn push_le(&mut self, row: &DVector<f64>, rhs: f64) {
        self.push_ge(&-row, -rhs);
    }

    /// Finite bounds become single-coordinate rows.
    pub fn push_box(&mut self, lo: &DVector<f64>, hi: &DVector<f64>) {
        let n = self.dim();
        for i in 0..n {
            let unit = DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 });
            if lo[i].is_finite() && hi[i].is_finite() && lo[i] == hi[i] {
                self.push_eq(&unit, lo[i]);
                continue;
            }
            if lo[i].is_finite() {
                self.push_ge(&unit, lo[i]);
            }
            if hi[i].is_finite() {
                self.push_le(&unit, hi[i]);
            }
        }
    }

    fn rows(&self) -> usize {
        self.eq.nrows() + self.ge.nrows()
    }
}

fn append_row(m: &mut DMatrix<f64>, rhs: &mut DVector<f64>, row: &DVector<f64>, value: f64) {
    let r = m.nrows();
    let taken = std::mem::replace(m, DMatrix::zeros(0, 0));
    *m = taken.insert_row(r, 0.0);
    m.row_mut(r).copy_from(&row.transpose());
    let taken = std::mem::replace(rhs, DVector::zeros(0));
    *rhs = taken.push(value);
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of the equality rows, then of the inequality rows.
    pub multipliers: DVector<f64>,
    pub iterations: usize,
    /// Final active rows with their orientation, reusable as a warm start.
    pub active: Vec<(usize, f64)>,
}

/// A factored QP ready to be solved for many linear terms.
#[derive(Debug, Clone)]
pub struct DenseQp {
    chol: Cholesky<f64, Dyn>,
    rows: DMatrix<f64>,
    rhs: DVector<f64>,
    n_eq: usize,
    /// `G^{-1} C'`, one column per constraint row.
    w: DMatrix<f64>,
    /// `C G^{-1} C'`.
    m: DMatrix<f64>,
    row_norms: DVector<f64>,
}

impl DenseQp {
    pub fn new(g: DMatrix<f64>, constraints: &LinearConstraints) -> Result<Self> {
        let n = g.nrows();
        check_len("QP matrix columns", n, g.ncols())?;
        check_len("QP constraint columns", n, constraints.dim())?;
        let chol = Cholesky::new(g)
            .ok_or_else(|| Error::InvalidOptions("QP matrix is not positive definite".into()))?;
        let total = constraints.rows();
        let mut rows = DMatrix::zeros(total, n);
        let mut rhs = DVector::zeros(total);
        let n_eq = constraints.eq.nrows();
        for i in 0..n_eq {
            rows.row_mut(i).copy_from(&constraints.eq.row(i));
            rhs[i] = constraints.eq_rhs[i];
        }
        for i in 0..constraints.ge.nrows() {
            rows.row_mut(n_eq + i).copy_from(&constraints.ge.row(i));
            rhs[n_eq + i] = constraints.ge_rhs[i];
        }
        let row_norms = DVector::from_fn(total, |i, _| rows.row(i).norm());
        if let Some(i) = row_norms.iter().position(|&r| r == 0.0) {
            return Err(Error::InvalidConstraint(format!("QP constraint row {} is zero", i + 1)));
        }
        let w = chol.solve(&rows.transpose());
        let m = &rows * &w;
        Ok(Self {
            chol,
            rows,
            rhs,
            n_eq,
            w,
            m,
            row_norms,
        })
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn solve(&self, a: &DVector<f64>) -> Result<QpSolution> {
        self.solve_warm(a, &[])
    }

    /// Solves starting from a guess of the active set, typically the
    /// `active` field of a previous solution. Rows of the guess whose
    /// multipliers come out negative are dropped first.
    pub fn solve_warm(&self, a: &DVector<f64>, guess: &[(usize, f64)]) -> Result<QpSolution> {
        check_len("QP linear term", self.dim(), a.len())?;
        let total = self.rows.nrows();
        let x0 = -self.chol.solve(a);
        // active constraints with their sign (equalities may enter reversed) and multiplier
        let (mut x, mut active, mut u) = self.dual_feasible_start(&x0, guess);
        let max_iter = 20 * (total + self.dim()) + 100;
        let mut iterations = 0;

        loop {
            let Some((p, sign)) = self.most_violated(&x, &active) else {
                break;
            };
            let mut u_p = 0.0;
            loop {
                iterations += 1;
                if iterations > max_iter {
                    return Err(Error::NonConvergence {
                        stage: "qp active set",
                        iterations,
                        residual: self.max_violation(&x),
                        last_iterate: x.iter().copied().collect(),
                    });
                }
                let r = self.dual_direction(&active, p, sign)?;
                let mut z = self.w.column(p) * sign;
                for (&(j, sj), &rj) in active.iter().zip(r.iter()) {
                    z -= self.w.column(j) * (sj * rj);
                }
                let slack = sign * (self.rows.row(p).dot(&x.transpose()) - self.rhs[p]);
                let curvature = sign * self.rows.row(p).dot(&z.transpose());

                let mut t1 = f64::INFINITY;
                let mut blocking = None;
                for (k, (&(j, _), &rj)) in active.iter().zip(r.iter()).enumerate() {
                    if j >= self.n_eq && rj > 1e-14 {
                        let t = u[k] / rj;
                        if t < t1 {
                            t1 = t;
                            blocking = Some(k);
                        }
                    }
                }
                let t2 = if curvature > 1e-14 * self.m[(p, p)] {
                    -slack / curvature
                } else {
                    f64::INFINITY
                };
                if !t1.is_finite() && !t2.is_finite() {
                    return Err(Error::InvalidConstraint(
                        "quadratic program is infeasible".into(),
                    ));
                }
                let t = t1.min(t2);
                if t2.is_finite() {
                    x += &z * t;
                }
                for (uk, rk) in u.iter_mut().zip(r.iter()) {
                    *uk -= t * rk;
                }
                u_p += t;
                if t2 <= t1 {
                    active.push((p, sign));
                    u.push(u_p);
                    break;
                }
                let k = blocking.expect("finite partial step has a blocking constraint");
                active.remove(k);
                u.remove(k);
            }
        }

        if !active.is_empty() {
            if let Some((xp, up)) = self.polish(&x0, &active) {
                let dual_ok = active
                    .iter()
                    .zip(up.iter())
                    .all(|(&(j, _), &uj)| j < self.n_eq || uj >= -1e-10);
                if dual_ok && self.max_violation(&xp) <= self.max_violation(&x).max(1e-12) {
                    x = xp;
                    u = up;
                }
            }
        }

        let mut multipliers = DVector::zeros(total);
        for (&(j, sj), &uj) in active.iter().zip(u.iter()) {
            multipliers[j] = sj * uj;
        }
        Ok(QpSolution {
            x,
            multipliers,
            iterations,
            active,
        })
    }

    /// Largest subset of `guess` whose equality-constrained minimizer has
    /// non-negative inequality multipliers; empty when none is found.
    fn dual_feasible_start(
        &self,
        x0: &DVector<f64>,
        guess: &[(usize, f64)],
    ) -> (DVector<f64>, Vec<(usize, f64)>, Vec<f64>) {
        let mut active: Vec<(usize, f64)> = guess
            .iter()
            .copied()
            .filter(|&(j, s)| j < self.rows.nrows() && (s == 1.0 || (s == -1.0 && j < self.n_eq)))
            .collect();
        while !active.is_empty() {
            let Some((x, u)) = self.polish(x0, &active) else {
                break;
            };
            let worst = active
                .iter()
                .zip(u.iter())
                .enumerate()
                .filter(|(_, (&(j, _), _))| j >= self.n_eq)
                .min_by(|a, b| a.1 .1.total_cmp(b.1 .1))
                .filter(|(_, (_, &uj))| uj < 0.0)
                .map(|(k, _)| k);
            match worst {
                Some(k) => {
                    active.remove(k);
                }
                None => return (x, active, u),
            }
        }
        (x0.clone(), Vec::new(), Vec::new())
    }

    fn violation(&self, x: &DVector<f64>, j: usize) -> f64 {
        let s = self.rows.row(j).dot(&x.transpose()) - self.rhs[j];
        let v = if j < self.n_eq { s.abs() } else { (-s).max(0.0) };
        v / self.row_norms[j]
    }

    fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (0..self.rows.nrows())
            .map(|j| self.violation(x, j))
            .fold(0.0, f64::max)
    }

    fn most_violated(&self, x: &DVector<f64>, active: &[(usize, f64)]) -> Option<(usize, f64)> {
        let scale = 1.0 + x.amax();
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.rows.nrows() {
            if active.iter().any(|&(k, _)| k == j) {
                continue;
            }
            let v = self.violation(x, j);
            if v > 1e-13 * scale && best.map_or(true, |(_, _, bv)| v > bv) {
                let s = self.rows.row(j).dot(&x.transpose()) - self.rhs[j];
                let sign = if j < self.n_eq && s > 0.0 { -1.0 } else { 1.0 };
                best = Some((j, sign, v));
            }
        }
        best.map(|(j, sign, _)| (j, sign))
    }

    fn active_gram(&self, active: &[(usize, f64)]) -> DMatrix<f64> {
        let k = active.len();
        DMatrix::from_fn(k, k, |a, b| {
            let (i, si) = active[a];
            let (j, sj) = active[b];
            si * sj * self.m[(i, j)]
        })
    }

    fn dual_direction(&self, active: &[(usize, f64)], p: usize, sign: f64) -> Result<DVector<f64>> {
        if active.is_empty() {
            return Ok(DVector::zeros(0));
        }
        let gram = self.active_gram(active);
        let rhs = DVector::from_fn(active.len(), |a, _| {
            let (i, si) = active[a];
            si * sign * self.m[(i, p)]
        });
        gram.lu()
            .solve(&rhs)
            .ok_or_else(|| Error::RankDeficient("active constraints are linearly dependent".into()))
    }

    /// Re-solves the equality problem on the final active set to remove drift.
    fn polish(&self, x0: &DVector<f64>, active: &[(usize, f64)]) -> Option<(DVector<f64>, Vec<f64>)> {
        let gram = self.active_gram(active);
        let rhs = DVector::from_fn(active.len(), |a, _| {
            let (i, si) = active[a];
            si * (self.rhs[i] - self.rows.row(i).dot(&x0.transpose()))
        });
        let u = gram.lu().solve(&rhs)?;
        let mut x = x0.clone();
        for (&(j, sj), &uj) in active.iter().zip(u.iter()) {
            x += self.w.column(j) * (sj * uj);
        }
        x.iter()
            .all(|v| v.is_finite())
            .then(|| (x, u.iter().copied().collect()))
    }
}

/// Solves one QP; see [`DenseQp`] to reuse the factorization.
pub fn solve_qp(g: DMatrix<f64>, a: &DVector<f64>, constraints: &LinearConstraints) -> Result<QpSolution> {
    DenseQp::new(g, constraints)?.solve(a)
}
