//! Brute-force Euclidean projection onto a small polyhedron by active-set enumeration.

use nalgebra::{DMatrix, DVector};

pub struct Polyhedron {
    pub eq: Vec<(DVector<f64>, f64)>,
    /// Rows `c' x <= d`.
    pub le: Vec<(DVector<f64>, f64)>,
}

impl Polyhedron {
    pub fn project(&self, v: &DVector<f64>) -> Option<DVector<f64>> {
        let m = self.le.len();
        assert!(m <= 16, "enumeration is exponential in the inequality count");
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0u32..(1 << m) {
            let active: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
            let rows: Vec<&(DVector<f64>, f64)> =
                self.eq.iter().chain(active.iter().map(|&k| &self.le[k])).collect();
            let (x, nu) = if rows.is_empty() {
                (v.clone(), DVector::zeros(0))
            } else {
                let a = DMatrix::from_fn(rows.len(), v.len(), |i, j| rows[i].0[j]);
                let b = DVector::from_fn(rows.len(), |i, _| rows[i].1);
                let gram = &a * a.transpose();
                let nu = gram.pseudo_inverse(1e-12).ok()? * (&a * v - &b);
                let x = v - a.transpose() * &nu;
                if (&a * &x - &b).amax() > 1e-9 {
                    continue;
                }
                (x, nu)
            };
            let feasible = self.le.iter().all(|(c, d)| c.dot(&x) <= d + 1e-9);
            let dual_ok = (self.eq.len()..nu.len()).all(|k| nu[k] >= -1e-9);
            if feasible && dual_ok {
                let dist = (&x - v).norm();
                if best.as_ref().map_or(true, |(d, _)| dist < *d) {
                    best = Some((dist, x));
                }
            }
        }
        best.map(|(_, x)| x)
    }
}
