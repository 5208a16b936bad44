use nalgebra::{DMatrix, DVector};

use crate::model::{AssetUniverse, RiskParams};

/// `f(x) = -x'pi + c sqrt(x' Sigma x) - lambda sum_i b_i ln x_i`, optionally
/// plus the ADMM penalty `phi/2 ||x - v||^2`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Barrier<'a> {
    pub cov: &'a DMatrix<f64>,
    pub excess: &'a DVector<f64>,
    pub c: f64,
    pub b: &'a DVector<f64>,
    pub lambda: f64,
    pub penalty: Option<(f64, &'a DVector<f64>)>,
}

impl<'a> Barrier<'a> {
    pub fn new(universe: &'a AssetUniverse, params: &RiskParams, b: &'a DVector<f64>, lambda: f64) -> Self {
        Self {
            cov: universe.covariance(),
            excess: universe.excess_returns(),
            c: params.c(),
            b,
            lambda,
            penalty: None,
        }
    }

    pub fn with_penalty(mut self, phi: f64, v: &'a DVector<f64>) -> Self {
        self.penalty = Some((phi, v));
        self
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        if x.iter().any(|&v| v <= 0.0) {
            return f64::INFINITY;
        }
        let vol = x.dot(&(self.cov * x)).max(0.0).sqrt();
        let barrier: f64 = x.iter().zip(self.b.iter()).map(|(xi, bi)| bi * xi.ln()).sum();
        let mut f = -x.dot(self.excess) + self.c * vol - self.lambda * barrier;
        if let Some((phi, v)) = self.penalty {
            f += 0.5 * phi * (x - v).norm_squared();
        }
        f
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let sx = self.cov * x;
        let vol = x.dot(&sx).max(0.0).sqrt();
        let mut g = sx * (self.c / vol) - self.excess;
        for i in 0..x.len() {
            g[i] -= self.lambda * self.b[i] / x[i];
        }
        if let Some((phi, v)) = self.penalty {
            g += (x - v) * phi;
        }
        g
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let sx = self.cov * x;
        let var = x.dot(&sx).max(0.0);
        let vol = var.sqrt();
        let mut h = self.cov * (self.c / vol) - (&sx * sx.transpose()) * (self.c / (var * vol));
        let phi = self.penalty.map_or(0.0, |(phi, _)| phi);
        for i in 0..x.len() {
            h[(i, i)] += self.lambda * self.b[i] / (x[i] * x[i]) + phi;
        }
        h
    }
}
