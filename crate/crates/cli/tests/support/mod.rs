#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;
use std::process::Command;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskbudget::{AssetUniverse, Budgets};

pub fn example(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "examples", name].iter().collect();
    path.to_string_lossy().into_owned()
}

/// Runs the binary and returns stdout, failing loudly on a nonzero exit.
pub fn rbsolve(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_rbsolve"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "rbsolve {} exited with {:?}: {}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("UTF-8 output")
}

pub fn json<T: serde::de::DeserializeOwned>(args: &[&str]) -> T {
    serde_json::from_str(&rbsolve(args)).expect("valid JSON output")
}

/// Collects named checks and prints one PASS/FAIL line for the criterion.
pub struct Criterion {
    id: u32,
    title: &'static str,
    checks: usize,
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Criterion {
    pub fn new(id: u32, title: &'static str) -> Self {
        Self {
            id,
            title,
            checks: 0,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn holds(&mut self, what: impl Into<String>, ok: bool) {
        self.checks += 1;
        if !ok {
            self.failures.push(what.into());
        }
    }

    pub fn close(&mut self, what: &str, got: f64, expected: f64, tol: f64) {
        self.holds(
            format!("{what}: got {got:.4}, expected {expected:.2} +/- {tol}"),
            (got - expected).abs() <= tol,
        );
    }

    pub fn all_close(&mut self, what: &str, got: &[f64], expected: &[f64], tol: f64) {
        assert_eq!(got.len(), expected.len(), "{what}: length");
        for (i, (g, e)) in got.iter().zip(expected).enumerate() {
            self.close(&format!("{what}[{}]", i + 1), *g, *e, tol);
        }
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    /// Prints the verdict line and any notes or failures; returns whether it passed.
    pub fn finish(self) -> bool {
        let verdict = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        println!(
            "{verdict} criterion {:>2}: {} ({} checks, {} failed)",
            self.id,
            self.title,
            self.checks,
            self.failures.len()
        );
        for n in &self.notes {
            println!("    note: {n}");
        }
        for f in &self.failures {
            println!("    failed: {f}");
        }
        self.failures.is_empty()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

/// Correlation from normalized factor loadings mixed with the identity.
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
    c.fill_diagonal(1.0);
    c
}

pub fn universe(rng: &mut ChaCha8Rng, n: usize, signed: bool, with_returns: bool) -> AssetUniverse {
    let vol = DVector::from_fn(n, |_, _| rng.gen_range(0.05..0.40));
    let u = AssetUniverse::from_vol_corr(vol.clone(), correlation(rng, n, signed)).unwrap();
    if with_returns {
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
    b[0] += 1.0 - b.iter().sum::<f64>();
    Budgets::new(b).unwrap()
}

pub fn simplex_point(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let raw = DVector::from_fn(n, |_, _| rng.gen_range(0.2..1.0));
    &raw / raw.sum()
}
