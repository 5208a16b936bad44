//! Proximal operators, Euclidean projections and Dykstra's algorithm.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Unique positive root of `phi z^2 - phi v z - lambda b = 0`, componentwise.
///
/// This is the proximal operator of `-lambda sum_i b_i ln z_i` with penalty `phi`.
pub fn prox_log_barrier(v: &DVector<f64>, lambda: f64, b: &DVector<f64>, phi: f64) -> DVector<f64> {
    debug_assert!(lambda >= 0.0 && phi > 0.0);
    v.zip_map(b, |vi, bi| log_barrier_root(vi, lambda * bi, phi))
}

/// Positive root of `phi z^2 - phi v z - lb = 0`, free of cancellation for either sign of `v`.
pub(crate) fn log_barrier_root(v: f64, lb: f64, phi: f64) -> f64 {
    let pv = phi * v;
    let sq = (pv * pv + 4.0 * phi * lb).sqrt();
    if pv >= 0.0 {
        (pv + sq) / (2.0 * phi)
    } else {
        2.0 * lb / (sq - pv)
    }
}

/// Componentwise clamp `T(v; lo, hi)`.
pub fn project_box(v: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("box lower bounds", v.len(), lo.len())?;
    check_len("box upper bounds", v.len(), hi.len())?;
    validate_box(lo, hi)?;
    Ok(clamp(v, lo, hi))
}

fn clamp(v: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| v[i].max(lo[i]).min(hi[i]))
}

pub(crate) fn validate_box(lo: &DVector<f64>, hi: &DVector<f64>) -> Result<()> {
    for (index, (&lower, &upper)) in lo.iter().zip(hi.iter()).enumerate() {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::InvalidBounds {
                index,
                lower,
                upper,
            });
        }
    }
    Ok(())
}

/// Projection onto `{x : c'x <= d}`.
pub fn project_halfspace(v: &DVector<f64>, c: &DVector<f64>, d: f64) -> Result<DVector<f64>> {
    check_len("half-space normal", v.len(), c.len())?;
    let norm2 = nonzero_normal(c)?;
    Ok(halfspace(v, c, d, norm2))
}

fn halfspace(v: &DVector<f64>, c: &DVector<f64>, d: f64, norm2: f64) -> DVector<f64> {
    let excess = c.dot(v) - d;
    if excess <= 0.0 {
        v.clone()
    } else {
        v - c * (excess / norm2)
    }
}

/// Projection onto the hyperplane `{x : c'x = d}`.
pub fn project_hyperplane(v: &DVector<f64>, c: &DVector<f64>, d: f64) -> Result<DVector<f64>> {
    check_len("hyperplane normal", v.len(), c.len())?;
    let norm2 = nonzero_normal(c)?;
    Ok(v - c * ((c.dot(v) - d) / norm2))
}

fn nonzero_normal(c: &DVector<f64>) -> Result<f64> {
    let norm2 = c.norm_squared();
    if norm2 > 0.0 && norm2.is_finite() {
        Ok(norm2)
    } else {
        Err(Error::InvalidConstraint("constraint row is zero".into()))
    }
}

/// Projection onto `{x : Ax = B}` through the pseudo-inverse of `A`.
pub fn project_affine(v: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(AffineProjector::new(a.clone(), b.clone())?.project(v))
}

/// Affine set `{x : Ax = B}` with the pseudo-inverse of `A` computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineProjector {
    a: DMatrix<f64>,
    b: DVector<f64>,
    pinv: DMatrix<f64>,
}

impl AffineProjector {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_len("affine right-hand side", a.nrows(), b.len())?;
        if a.nrows() == 0 {
            return Err(Error::InvalidConstraint("affine constraint has no rows".into()));
        }
        if let Some(row) = (0..a.nrows()).find(|&i| a.row(i).norm_squared() == 0.0) {
            return Err(Error::InvalidConstraint(format!(
                "row {} of the affine constraint is zero",
                row + 1
            )));
        }
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let cutoff = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64 * 16.0;
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        if rank < a.nrows() {
            return Err(Error::RankDeficient(format!(
                "{} equality rows but rank {rank}",
                a.nrows()
            )));
        }
        let pinv = svd
            .pseudo_inverse(cutoff)
            .map_err(|e| Error::RankDeficient(e.to_string()))?;
        Ok(Self { a, b, pinv })
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let residual = &self.a * v - &self.b;
        v - &self.pinv * residual
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }
}

/// Threshold `s*` solving `sum_i (v_i - s)_+ = lambda` exactly.
///
/// When the equation has no root at or above `min(v)` the linear extension
/// `(sum v - lambda) / n` is returned.
fn max_threshold(v: &DVector<f64>, lambda: f64) -> f64 {
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = f64::NAN;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let s = (cumulative - lambda) / (k + 1) as f64;
        threshold = s;
        match sorted.get(k + 1) {
            Some(&next) if next > s => continue,
            _ => break,
        }
    }
    threshold
}

/// Proximal operator of `lambda * max_i x_i`: `min(v, s*)`.
pub fn prox_max(v: &DVector<f64>, lambda: f64) -> DVector<f64> {
    if v.is_empty() {
        return v.clone();
    }
    let s = max_threshold(v, lambda);
    v.map(|vi| vi.min(s))
}

/// Soft thresholding, the proximal operator of `lambda ||x||_1`.
pub fn prox_l1(v: &DVector<f64>, lambda: f64) -> DVector<f64> {
    v.map(|vi| vi.signum() * (vi.abs() - lambda).max(0.0))
}

/// Block soft thresholding, the proximal operator of `lambda ||x||_2`.
pub fn prox_l2(v: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let norm = v.norm();
    v * (1.0 - lambda / lambda.max(norm))
}

/// Proximal operator of `lambda ||x||_inf`.
pub fn prox_linf(v: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let magnitude = v.abs();
    if magnitude.sum() <= lambda {
        return DVector::zeros(v.len());
    }
    let s = max_threshold(&magnitude, lambda).max(0.0);
    v.map(|vi| vi.signum() * vi.abs().min(s))
}

/// Projection onto the l1 ball `{x : ||x - center||_1 <= radius}`.
pub fn project_l1_ball(v: &DVector<f64>, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let w = v - center;
    let magnitude = w.abs();
    if magnitude.sum() <= radius {
        return v.clone();
    }
    if radius <= 0.0 {
        return center.clone();
    }
    let s = max_threshold(&magnitude, radius);
    center + w.map(|wi| wi.signum() * (wi.abs() - s).max(0.0))
}

/// Projection onto the l2 ball `{x : ||x - center||_2 <= radius}`.
pub fn project_l2_ball(v: &DVector<f64>, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let w = v - center;
    let norm = w.norm();
    if norm <= radius {
        v.clone()
    } else {
        center + w * (radius / norm)
    }
}

/// Exact projection onto one basic convex set.
#[derive(Debug, Clone, PartialEq)]
pub enum Projector {
    Box {
        lo: DVector<f64>,
        hi: DVector<f64>,
    },
    HalfSpace {
        c: DVector<f64>,
        d: f64,
        norm2: f64,
    },
    Hyperplane {
        c: DVector<f64>,
        d: f64,
        norm2: f64,
    },
    Affine(AffineProjector),
    L1Ball {
        center: DVector<f64>,
        radius: f64,
    },
    L2Ball {
        center: DVector<f64>,
        radius: f64,
    },
}

impl Projector {
    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        check_len("box upper bounds", lo.len(), hi.len())?;
        validate_box(&lo, &hi)?;
        Ok(Self::Box { lo, hi })
    }

    pub fn halfspace(c: DVector<f64>, d: f64) -> Result<Self> {
        let norm2 = nonzero_normal(&c)?;
        Ok(Self::HalfSpace { c, d, norm2 })
    }

    pub fn hyperplane(c: DVector<f64>, d: f64) -> Result<Self> {
        let norm2 = nonzero_normal(&c)?;
        Ok(Self::Hyperplane { c, d, norm2 })
    }

    pub fn affine(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() == 1 {
            return Self::hyperplane(a.row(0).transpose(), b[0]);
        }
        Ok(Self::Affine(AffineProjector::new(a, b)?))
    }

    pub fn l1_ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::InvalidConstraint(format!(
                "l1-ball radius must be non-negative, got {radius}"
            )));
        }
        Ok(Self::L1Ball { center, radius })
    }

    pub fn l2_ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::InvalidConstraint(format!(
                "l2-ball radius must be non-negative, got {radius}"
            )));
        }
        Ok(Self::L2Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Box { lo, .. } => lo.len(),
            Self::HalfSpace { c, .. } | Self::Hyperplane { c, .. } => c.len(),
            Self::Affine(p) => p.matrix().ncols(),
            Self::L1Ball { center, .. } | Self::L2Ball { center, .. } => center.len(),
        }
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Box { lo, hi } => clamp(v, lo, hi),
            Self::HalfSpace { c, d, norm2 } => halfspace(v, c, *d, *norm2),
            Self::Hyperplane { c, d, norm2 } => v - c * ((c.dot(v) - d) / norm2),
            Self::Affine(p) => p.project(v),
            Self::L1Ball { center, radius } => project_l1_ball(v, center, *radius),
            Self::L2Ball { center, radius } => project_l2_ball(v, center, *radius),
        }
    }

    /// Constraint violation of `v`, in the natural units of the set.
    pub fn violation(&self, v: &DVector<f64>) -> f64 {
        match self {
            Self::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .map(|(&x, (&l, &h))| (l - x).max(x - h).max(0.0))
                .fold(0.0, f64::max),
            Self::HalfSpace { c, d, .. } => (c.dot(v) - d).max(0.0),
            Self::Hyperplane { c, d, .. } => (c.dot(v) - d).abs(),
            Self::Affine(p) => (p.matrix() * v - p.rhs()).amax(),
            Self::L1Ball { center, radius } => ((v - center).lp_norm(1) - radius).max(0.0),
            Self::L2Ball { center, radius } => ((v - center).norm() - radius).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DykstraOptions {
    pub max_iter: usize,
    /// Feasibility tolerance on every set.
    pub tol: f64,
    /// Sup-norm change of the iterate and of every correction over one full
    /// sweep below which the sweep has stalled.
    pub stall_tol: f64,
}

impl Default for DykstraOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-10,
            stall_tol: 1e-12,
        }
    }
}

/// Projection onto the intersection of the given sets, visited in order.
pub fn dykstra(v: &DVector<f64>, projectors: &[Projector], options: &DykstraOptions) -> Result<DVector<f64>> {
    dykstra_counted(v, projectors, options).map(|(x, _)| x)
}

/// As [`dykstra`], also returning the number of sweeps.
pub fn dykstra_counted(
    v: &DVector<f64>,
    projectors: &[Projector],
    options: &DykstraOptions,
) -> Result<(DVector<f64>, usize)> {
    for p in projectors {
        check_len("projector dimension", v.len(), p.dim())?;
    }
    match projectors {
        [] => return Ok((v.clone(), 0)),
        [single] => return Ok((single.project(v), 1)),
        _ => {}
    }
    let mut x = v.clone();
    let mut corrections = vec![DVector::zeros(v.len()); projectors.len()];
    let mut residual = f64::INFINITY;
    for sweep in 1..=options.max_iter {
        let start = x.clone();
        let mut stall: f64 = 0.0;
        for (p, z) in projectors.iter().zip(corrections.iter_mut()) {
            let shifted = &x + &*z;
            let next = p.project(&shifted);
            let correction = shifted - &next;
            stall = stall.max((&correction - &*z).amax());
            *z = correction;
            x = next;
        }
        let stall = stall.max((&x - &start).amax());
        if stall <= options.stall_tol {
            residual = projectors
                .iter()
                .map(|p| p.violation(&x))
                .fold(0.0, f64::max);
            if residual <= options.tol {
                return Ok((x, sweep));
            }
        }
    }
    Err(Error::NonConvergence {
        stage: "dykstra",
        iterations: options.max_iter,
        residual,
        last_iterate: x.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn log_barrier_examples() {
        let z = prox_log_barrier(&dv(&[0.0]), 1.0, &dv(&[1.0]), 1.0);
        assert!((z[0] - 1.0).abs() < 1e-15);
        let z = prox_log_barrier(&dv(&[3.0]), 1e-14, &dv(&[1.0]), 1.0);
        assert!((z[0] - 3.0).abs() < 1e-12);
        let z = prox_log_barrier(&dv(&[1.0]), 2.0, &dv(&[0.5]), 4.0);
        assert!((z[0] - (1.0 + 2f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((4.0 * z[0] * z[0] - 4.0 * z[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn log_barrier_negative_input_stays_positive() {
        let z = prox_log_barrier(&dv(&[-1e8]), 1e-3, &dv(&[0.1]), 1.0);
        assert!(z[0] > 0.0);
        assert!((z[0] * z[0] + 1e8 * z[0] - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn box_examples() {
        let out = project_box(&dv(&[-1.0, 0.5, 2.0]), &DVector::zeros(3), &DVector::from_element(3, 1.0)).unwrap();
        assert_eq!(out, dv(&[0.0, 0.5, 1.0]));
        let out = project_box(&dv(&[0.7]), &dv(&[0.2]), &dv(&[0.35])).unwrap();
        assert_eq!(out[0], 0.35);
        assert!(matches!(
            project_box(&dv(&[0.0]), &dv(&[1.0]), &dv(&[0.0])),
            Err(Error::InvalidBounds { index: 0, .. })
        ));
    }

    #[test]
    fn halfspace_examples() {
        assert_eq!(project_halfspace(&dv(&[1.0, 1.0]), &dv(&[1.0, 0.0]), 0.0).unwrap(), dv(&[0.0, 1.0]));
        assert_eq!(project_halfspace(&dv(&[0.2, 0.3]), &dv(&[1.0, 1.0]), 1.0).unwrap(), dv(&[0.2, 0.3]));
        assert_eq!(project_halfspace(&dv(&[1.0, 1.0]), &dv(&[1.0, 1.0]), 1.0).unwrap(), dv(&[0.5, 0.5]));
        assert!(project_halfspace(&dv(&[1.0]), &dv(&[0.0]), 1.0).is_err());
    }

    #[test]
    fn affine_examples() {
        let ones = DMatrix::from_element(1, 2, 1.0);
        let x = project_affine(&dv(&[0.0, 0.0]), &ones, &dv(&[1.0])).unwrap();
        assert!((x - dv(&[0.5, 0.5])).amax() < 1e-15);
        let pin = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let x = project_affine(&dv(&[0.7, 0.9]), &pin, &dv(&[0.3])).unwrap();
        assert!((x - dv(&[0.3, 0.9])).amax() < 1e-15);
        let x = project_affine(&dv(&[0.3, 0.2]), &pin, &dv(&[0.3])).unwrap();
        assert!((x - dv(&[0.3, 0.2])).amax() < 1e-15);
        let dup = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        assert!(matches!(
            project_affine(&dv(&[0.0, 0.0]), &dup, &dv(&[1.0, 2.0])),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn prox_max_examples() {
        assert_eq!(prox_max(&dv(&[3.0, 1.0]), 1.0), dv(&[2.0, 1.0]));
        assert_eq!(prox_max(&dv(&[5.0]), 2.0), dv(&[3.0]));
        assert!(prox_max(&dv(&[1.0, 1.0, 1.0]), 3.0).amax() < 1e-15);
        // root below min(v): (4 + 1 - 7) / 2
        assert_eq!(prox_max(&dv(&[4.0, 1.0]), 7.0), dv(&[-1.0, -1.0]));
    }

    #[test]
    fn norm_prox_examples() {
        assert_eq!(prox_l1(&dv(&[2.0, -0.5]), 1.0), dv(&[1.0, 0.0]));
        assert_eq!(prox_l1(&dv(&[0.0]), 0.3), dv(&[0.0]));
        assert_eq!(prox_linf(&dv(&[3.0, 1.0]), 1.0), dv(&[2.0, 1.0]));
        assert_eq!(prox_linf(&dv(&[-3.0, 1.0]), 1.0), dv(&[-2.0, 1.0]));
        assert_eq!(prox_linf(&dv(&[0.2, -0.1]), 1.0), dv(&[0.0, 0.0]));
        assert!((prox_l2(&dv(&[3.0, 4.0]), 1.0) - dv(&[2.4, 3.2])).amax() < 1e-15);
        assert_eq!(prox_l2(&dv(&[0.3, 0.4]), 1.0), dv(&[0.0, 0.0]));
    }

    #[test]
    fn l1_ball_examples() {
        let c = dv(&[0.2, 0.8]);
        assert_eq!(project_l1_ball(&c, &c, 0.0), c);
        let out = project_l1_ball(&dv(&[2.0, 0.0]), &DVector::zeros(2), 1.0);
        assert!((out - dv(&[1.0, 0.0])).amax() < 1e-15);
        let out = project_l1_ball(&dv(&[3.0, -2.0, 0.5]), &dv(&[1.0, 0.0, 0.0]), 1.5);
        assert!(((&out - dv(&[1.0, 0.0, 0.0])).lp_norm(1) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn dykstra_examples() {
        let sets = [
            Projector::hyperplane(dv(&[1.0, 1.0]), 1.0).unwrap(),
            Projector::boxed(DVector::zeros(2), DVector::from_element(2, f64::INFINITY)).unwrap(),
        ];
        let x = dykstra(&dv(&[2.0, -2.0]), &sets, &DykstraOptions::default()).unwrap();
        assert!((x - dv(&[1.0, 0.0])).amax() < 1e-10);
        let single = [Projector::halfspace(dv(&[1.0, 1.0]), 1.0).unwrap()];
        let x = dykstra(&dv(&[1.0, 1.0]), &single, &DykstraOptions::default()).unwrap();
        assert_eq!(x, dv(&[0.5, 0.5]));
    }

    #[test]
    fn dykstra_reports_empty_intersection() {
        let sets = [
            Projector::halfspace(dv(&[1.0]), 0.0).unwrap(),
            Projector::halfspace(dv(&[-1.0]), -1.0).unwrap(),
        ];
        let options = DykstraOptions {
            max_iter: 200,
            ..DykstraOptions::default()
        };
        let err = dykstra(&dv(&[0.5]), &sets, &options).unwrap_err();
        assert!(err.is_non_convergence());
    }
}
