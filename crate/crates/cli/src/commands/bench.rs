//! Solver timings on synthetic universes. Absolute times depend on the machine.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskbudget::{solve, Algorithm, AssetUniverse, Budgets, ConstraintSet, Problem, RiskParams, SolverOptions};
use serde::{Deserialize, Serialize};

use crate::cli::{invalid, BenchArgs};
use crate::error::CliResult;

const FACTORS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tier {
    /// Fixed penalty, bisection restarted from scratch at every lambda.
    FixedPlain,
    /// Fixed penalty, bisection warm-started from the previous lambda.
    FixedAccelerated,
    /// Adaptive penalty, warm-started bisection.
    AdaptiveAccelerated,
}

impl Tier {
    pub fn from_number(k: u8) -> CliResult<Self> {
        match k {
            1 => Ok(Tier::FixedPlain),
            2 => Ok(Tier::FixedAccelerated),
            3 => Ok(Tier::AdaptiveAccelerated),
            _ => Err(invalid(format!("unknown tier {k} (expected 1, 2 or 3)"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Tier::FixedPlain => 1,
            Tier::FixedAccelerated => 2,
            Tier::AdaptiveAccelerated => 3,
        }
    }

    fn options(self, algorithm: Algorithm) -> SolverOptions {
        SolverOptions {
            algorithm,
            adaptive: self == Tier::AdaptiveAccelerated,
            accelerated: self != Tier::FixedPlain,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub tiers: Vec<Tier>,
    pub reps: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn from_args(args: &BenchArgs) -> CliResult<Self> {
        if args.reps == 0 || args.sizes.iter().any(|&n| n < 2) {
            return Err(invalid("bench needs at least one repetition and sizes of at least 2"));
        }
        Ok(Self {
            sizes: args.sizes.clone(),
            algorithms: args.algorithms.clone(),
            tiers: args.tiers.iter().map(|&k| Tier::from_number(k)).collect::<CliResult<_>>()?,
            reps: args.reps,
            seed: args.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub size: usize,
    pub algorithm: String,
    pub tier: u8,
    /// Fastest of the repetitions.
    pub seconds: f64,
    /// `seconds` over the fastest row of the run.
    pub relative: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

/// Factor-model universe with non-negative correlations and a box of
/// half to one and a half times equal weight, which always contains `1/n`.
pub fn synthetic_problem(n: usize, seed: u64) -> CliResult<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let vol = DVector::from_fn(n, |_, _| rng.gen_range(0.05..0.30));
    let loadings = DMatrix::from_fn(n, FACTORS, |_, _| rng.gen_range(0.0..1.0));
    let idio = DVector::from_fn(n, |_, _| rng.gen_range(0.2..1.0));
    let mut cov = &loadings * loadings.transpose();
    for i in 0..n {
        cov[(i, i)] += idio[i];
    }
    let sd = cov.diagonal().map(f64::sqrt);
    let corr = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { cov[(i, j)] / (sd[i] * sd[j]) });
    let universe = AssetUniverse::from_vol_corr(vol, corr)?;
    let w = 1.0 / n as f64;
    let omega = ConstraintSet::new(n).with_box(DVector::from_element(n, 0.5 * w), DVector::from_element(n, 1.5 * w))?;
    Ok(Problem::new(universe, RiskParams::default(), Budgets::equal(n), omega)?)
}

pub fn run_bench(config: &BenchConfig) -> CliResult<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &n in &config.sizes {
        let problem = synthetic_problem(n, config.seed)?;
        for &algorithm in &config.algorithms {
            for &tier in &config.tiers {
                let options = tier.options(algorithm);
                let mut best = f64::INFINITY;
                let mut last = None;
                for _ in 0..config.reps {
                    let start = Instant::now();
                    let report = solve(&problem, &options)?;
                    best = best.min(start.elapsed().as_secs_f64());
                    last = Some(report.iterations);
                }
                let it = last.expect("at least one repetition");
                rows.push(BenchRow {
                    size: n,
                    algorithm: algorithm.name().to_string(),
                    tier: tier.number(),
                    seconds: best,
                    relative: 0.0,
                    outer_iterations: it.outer,
                    inner_iterations: it.inner,
                });
            }
        }
    }
    let fastest = rows.iter().map(|r| r.seconds).fold(f64::INFINITY, f64::min);
    for r in rows.iter_mut() {
        r.relative = if fastest > 0.0 { r.seconds / fastest } else { 1.0 };
    }
    Ok(rows)
}

pub fn table(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "Timings are machine-dependent; relative times are normalized to the fastest run.\n\
         tier 1: fixed phi, plain bisection; tier 2: fixed phi, warm-started bisection; \
         tier 3: adaptive phi, warm-started bisection\n",
    );
    let _ = writeln!(out, "{:>6}  {:<12}  {:>4}  {:>12}  {:>10}  {:>6}  {:>9}", "n", "algorithm", "tier", "time (ms)", "relative", "outer", "inner");
    for r in rows {
        let _ = writeln!(
            out,
            "{:>6}  {:<12}  {:>4}  {:>12.3}  {:>10.2}  {:>6}  {:>9}",
            r.size,
            r.algorithm,
            r.tier,
            1e3 * r.seconds,
            r.relative,
            r.outer_iterations,
            r.inner_iterations
        );
    }
    out
}
