use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use riskbudget::{AssetUniverse, Budgets};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Correlation matrix from normalized random factor loadings mixed with the identity.
/// Non-negative loadings give non-negative correlations.
pub fn correlation(rng: &mut ChaCha8Rng, n: usize, signed: bool) -> DMatrix<f64> {
    let k = 1 + n / 2;
    let floor = if signed { -1.0 } else { 0.0 };
    let mut l: DMatrix<f64> = DMatrix::from_fn(n, k, |_, _| rng.gen_range(floor..1.0));
    for i in 0..n {
        let norm = l.row(i).norm().max(1e-12);
        l.row_mut(i).scale_mut(1.0 / norm);
    }
    let mix = rng.gen_range(0.1..0.5);
    let mut c = &l * l.transpose() * (1.0 - mix) + DMatrix::identity(n, n) * mix;
    for i in 0..n {
        c[(i, i)] = 1.0;
    }
    c
}

/// With non-negative correlations the minimum-variance point of a box is its
/// lower corner, so any box straddling the simplex admits a barrier solution.
pub fn universe(rng: &mut ChaCha8Rng, n: usize, with_returns: bool) -> AssetUniverse {
    build(rng, n, with_returns, false)
}

pub fn signed_universe(rng: &mut ChaCha8Rng, n: usize, with_returns: bool) -> AssetUniverse {
    build(rng, n, with_returns, true)
}

fn build(rng: &mut ChaCha8Rng, n: usize, with_returns: bool, signed: bool) -> AssetUniverse {
    let vol = DVector::from_fn(n, |_, _| rng.gen_range(0.05..0.40));
    let u = AssetUniverse::from_vol_corr(vol.clone(), correlation(rng, n, signed)).unwrap();
    if with_returns {
        // keep the Sharpe ratios well below c = 1
        let mu = DVector::from_fn(n, |i, _| vol[i] * rng.gen_range(-0.2..0.3));
        u.with_expected_returns(mu).unwrap()
    } else {
        u
    }
}

pub fn budgets(rng: &mut ChaCha8Rng, n: usize) -> Budgets {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut b: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let drift = 1.0 - b.iter().sum::<f64>();
    b[0] += drift;
    Budgets::new(b).unwrap()
}

pub fn simplex_point(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let raw = DVector::from_fn(n, |_, _| rng.gen_range(0.2..1.0));
    &raw / raw.sum()
}

pub fn vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}
