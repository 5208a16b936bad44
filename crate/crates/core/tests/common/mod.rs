#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use riskbudget::AssetUniverse;

pub fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn pct(v: &[f64]) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().map(|x| x / 100.0))
}

/// Symmetric matrix from its lower triangle given row by row, unit diagonal implied.
pub fn corr_lower(n: usize, rows: &[&[f64]]) -> DMatrix<f64> {
    let mut m = DMatrix::identity(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i + 1, j)] = v;
            m[(j, i + 1)] = v;
        }
    }
    m
}

pub fn four_assets() -> AssetUniverse {
    let corr = corr_lower(4, &[&[0.5], &[0.5, 0.5], &[0.5, 0.5, 0.75]]);
    AssetUniverse::from_vol_corr(pct(&[10.0, 15.0, 20.0, 30.0]), corr).unwrap()
}

pub fn five_assets() -> AssetUniverse {
    let corr = corr_lower(
        5,
        &[&[0.10], &[0.40, 0.70], &[0.50, 0.40, 0.80], &[0.50, 0.40, 0.05, 0.10]],
    );
    AssetUniverse::from_vol_corr(pct(&[15.0, 20.0, 25.0, 30.0, 10.0]), corr).unwrap()
}

pub fn eight_assets() -> AssetUniverse {
    let corr = corr_lower(
        8,
        &[
            &[0.80],
            &[0.60, 0.40],
            &[-0.20, -0.20, 0.50],
            &[-0.10, -0.20, 0.30, 0.60],
            &[-0.20, -0.10, 0.20, 0.60, 0.90],
            &[-0.20, -0.20, 0.20, 0.50, 0.70, 0.60],
            &[-0.20, -0.20, 0.30, 0.60, 0.70, 0.70, 0.70],
        ],
    );
    AssetUniverse::from_vol_corr(pct(&[5.0, 5.0, 7.0, 10.0, 15.0, 15.0, 15.0, 18.0]), corr).unwrap()
}

pub fn seven_stocks() -> AssetUniverse {
    let corr = corr_lower(
        7,
        &[
            &[0.75],
            &[0.73, 0.75],
            &[0.70, 0.70, 0.75],
            &[0.65, 0.68, 0.69, 0.75],
            &[0.62, 0.65, 0.63, 0.67, 0.70],
            &[0.60, 0.60, 0.65, 0.68, 0.75, 0.80],
        ],
    );
    AssetUniverse::from_vol_corr(pct(&[15.0, 16.0, 17.0, 18.0, 19.0, 20.0, 21.0]), corr).unwrap()
}

/// Largest gap in percentage points between `x` (fractions) and `expected` (percent).
pub fn gap_pp(x: &DVector<f64>, expected: &[f64]) -> f64 {
    assert_eq!(x.len(), expected.len());
    x.iter()
        .zip(expected)
        .map(|(a, e)| (100.0 * a - e).abs())
        .fold(0.0, f64::max)
}

pub fn assert_pp(what: &str, x: &DVector<f64>, expected: &[f64], tol: f64) {
    let gap = gap_pp(x, expected);
    assert!(
        gap <= tol,
        "{what}: got {:?}, expected {expected:?} (gap {gap:.4} pp)",
        x.iter().map(|v| (v * 1e4).round() / 100.0).collect::<Vec<_>>()
    );
}

pub fn assert_close(what: &str, got: f64, expected: f64, tol: f64) {
    assert!((got - expected).abs() <= tol, "{what}: got {got}, expected {expected}");
}

pub mod oracle;
pub mod random;
