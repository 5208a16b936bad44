mod common;

use common::*;
use nalgebra::DVector;
use riskbudget::baselines::{least_squares_rb, naive_two_step, with_simplex, LsOptions};
use riskbudget::{
    decompose, solve, Algorithm, Budgets, ConstraintSet, Problem, RiskParams, SolveReport, SolverOptions, StartPoint,
};

fn params() -> RiskParams {
    RiskParams::default()
}

fn indicator(n: usize, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(n, |i, _| if idx.contains(&i) { 1.0 } else { 0.0 })
}

fn solve_with(problem: &Problem, algorithm: Algorithm) -> SolveReport {
    let options = SolverOptions {
        algorithm,
        ..SolverOptions::default()
    };
    solve(problem, &options).unwrap()
}

#[test]
fn unconstrained_erc_and_rb_four_assets() {
    let u = four_assets();
    let erc = solve_with(&Problem::unconstrained(u.clone(), params(), Budgets::equal(4)).unwrap(), Algorithm::Auto);
    assert_pp("ERC", erc.weights(), &[41.01, 27.34, 18.99, 12.66], 0.02);
    assert_pp("ERC MR", &erc.decomposition.mr, &[7.79, 11.68, 16.82, 25.23], 0.02);
    assert_pp("ERC RC", &erc.decomposition.rc, &[3.19; 4], 0.02);
    assert_close("ERC sigma", 100.0 * erc.decomposition.vol, 12.78, 0.02);

    let b = Budgets::new(vec![0.30, 0.30, 0.195, 0.205]).unwrap();
    let rb = solve_with(&Problem::unconstrained(u, params(), b).unwrap(), Algorithm::Auto);
    assert_pp("RB", rb.weights(), &[45.05, 30.04, 14.67, 10.24], 0.02);
    assert_close("RB sigma", 100.0 * rb.decomposition.vol, 12.11, 0.02);
}

#[test]
fn least_squares_with_upper_bound() {
    let u = four_assets();
    let omega = with_simplex(&ConstraintSet::new(4).with_box(DVector::zeros(4), DVector::from_element(4, 0.3)).unwrap())
        .unwrap();
    let ls = least_squares_rb(&u, &params(), &Budgets::equal(4), &omega, &LsOptions::default()).unwrap();
    assert_pp("LS ERC", ls.portfolio.weights(), &[30.0, 30.0, 24.57, 15.43], 0.02);
    assert_pp("LS ERC RC*", &ls.decomposition.rc_rel, &[15.50, 24.98, 30.74, 28.78], 0.02);
    assert_close("LS ERC sigma", 100.0 * ls.decomposition.vol, 13.93, 0.02);

    let b = Budgets::new(vec![0.30, 0.30, 0.195, 0.205]).unwrap();
    let ls = least_squares_rb(&u, &params(), &b, &omega, &LsOptions::default()).unwrap();
    assert_pp("LS RB", ls.portfolio.weights(), &[30.0, 30.0, 24.43, 15.57], 0.10);
}

fn x0_five() -> DVector<f64> {
    pct(&[25.0, 25.0, 10.0, 10.0, 30.0])
}

fn five_box() -> ConstraintSet {
    let x0 = x0_five();
    ConstraintSet::new(5)
        .with_box(x0.add_scalar(-0.05), x0.add_scalar(0.05))
        .unwrap()
}

#[test]
fn dynamic_allocation_five_assets() {
    let u = five_assets();
    let x0 = x0_five();
    let d = decompose(&x0, &u, &params()).unwrap();
    assert_pp("current MR", &d.mr, &[10.0, 15.40, 20.30, 22.24, 5.90], 0.02);
    assert_pp("current RC*", &d.rc_rel, &[20.21, 31.10, 16.41, 17.98, 14.30], 0.02);
    assert_close("current sigma", 100.0 * d.vol, 12.37, 0.02);

    let erc = solve_with(&Problem::unconstrained(u.clone(), params(), Budgets::equal(5)).unwrap(), Algorithm::Auto);
    assert_pp("ERC", erc.weights(), &[22.40, 16.51, 12.03, 10.51, 38.54], 0.02);
    assert_close("ERC sigma", 100.0 * erc.decomposition.vol, 11.88, 0.02);
    assert_close("ERC turnover", 100.0 * erc.portfolio.turnover(&x0), 22.18, 0.05);

    let problem = Problem::new(u, params(), Budgets::equal(5), five_box()).unwrap();
    for algorithm in [Algorithm::Ccd, Algorithm::AdmmNewton, Algorithm::AdmmCcd, Algorithm::AdmmQp] {
        let r = solve_with(&problem, algorithm);
        assert_pp(algorithm.name(), r.weights(), &[22.89, 20.00, 11.69, 10.42, 35.00], 0.02);
        assert_pp("RC", &r.decomposition.rc, &[2.35, 2.98, 2.35, 2.35, 2.10], 0.02);
        assert_close("sigma", 100.0 * r.decomposition.vol, 12.14, 0.02);
        assert_close("lambda", 100.0 * r.lambda, 11.76, 0.02);
        assert_close("turnover", 100.0 * r.portfolio.turnover(&x0), 14.22, 0.05);
        let kkt = r.kkt.as_ref().expect("box constraints report multipliers");
        assert_close("lambda_2^-", 100.0 * kkt[1].lower, 3.13, 0.02);
        assert_close("lambda_5^+", 100.0 * kkt[4].upper, 0.73, 0.02);
    }
}

#[test]
fn naive_and_least_squares_five_assets() {
    let u = five_assets();
    let naive = naive_two_step(&u, &params(), &Budgets::equal(5), &[(1, 0.20), (4, 0.35)]).unwrap();
    assert_pp("naive", naive.portfolio.weights(), &[22.84, 20.00, 12.34, 9.83, 35.00], 0.02);
    assert_pp("naive RC", &naive.decomposition.rc, &[2.34, 3.00, 2.49, 2.21, 2.10], 0.02);
    assert_pp("naive sub RC", &naive.sub_rc, &[2.65; 3], 0.02);

    let omega = with_simplex(&five_box()).unwrap();
    let ls = least_squares_rb(&u, &params(), &Budgets::equal(5), &omega, &LsOptions::default()).unwrap();
    assert_pp("LS", ls.portfolio.weights(), &[23.13, 20.00, 11.39, 10.48, 35.00], 0.10);
}

fn equity_floor(level: f64) -> ConstraintSet {
    ConstraintSet::new(8)
        .with_ge(indicator(8, &[4, 5, 6, 7]), level, "equity floor")
        .unwrap()
}

#[test]
fn inequality_constraints_eight_assets() {
    let u = eight_assets();
    let b = Budgets::equal(8);
    let erc = solve_with(&Problem::unconstrained(u.clone(), params(), b.clone()).unwrap(), Algorithm::Auto);
    assert_pp("ERC", erc.weights(), &[26.83, 28.68, 11.41, 9.80, 5.61, 5.90, 6.66, 5.11], 0.02);
    assert_close("ERC sigma", 100.0 * erc.decomposition.vol, 4.78, 0.02);

    let floor = Problem::new(u.clone(), params(), b.clone(), equity_floor(0.3)).unwrap();
    for algorithm in [Algorithm::AdmmNewton, Algorithm::AdmmCcd, Algorithm::AdmmQp] {
        let r = solve_with(&floor, algorithm);
        assert_close("sigma", 100.0 * r.decomposition.vol, 5.20, 0.02);
        let rc = r.decomposition.rc_rel.rows(4, 4).into_owned();
        assert_pp("equity RC*", &rc, &[15.91, 16.58, 18.14, 14.82], 0.02);
    }

    let tilt = indicator(8, &[1, 5]) - indicator(8, &[0, 4]);
    let both = equity_floor(0.3).with_ge(tilt, 0.05, "euro tilt").unwrap();
    let r = solve_with(&Problem::new(u, params(), b, both).unwrap(), Algorithm::Auto);
    assert_close("sigma", 100.0 * r.decomposition.vol, 5.19, 0.02);
    assert_pp("weights", r.weights(), &[24.52, 28.69, 9.52, 7.27, 6.97, 7.80, 9.23, 6.00], 0.02);
}

#[test]
fn smart_beta_pinned_small_caps() {
    let u = seven_stocks();
    let cw = pct(&[34.0, 25.0, 20.0, 15.0, 3.0, 2.0, 1.0]);
    let d = decompose(&cw, &u, &params()).unwrap();
    assert_close("CW sigma", 100.0 * d.vol, 14.50, 0.02);

    let mut lo = DVector::zeros(7);
    let mut hi = DVector::from_element(7, f64::INFINITY);
    for i in 4..7 {
        lo[i] = cw[i];
        hi[i] = cw[i];
    }
    let pinned = ConstraintSet::new(7).with_box(lo, hi).unwrap();
    let b = Budgets::equal(7);
    let r = solve_with(&Problem::new(u.clone(), params(), b.clone(), pinned.clone()).unwrap(), Algorithm::Auto);
    assert_pp("C-ERC", r.weights(), &[25.87, 24.07, 22.46, 21.59, 3.00, 2.00, 1.00], 0.02);
    assert_close("C-ERC sigma", 100.0 * r.decomposition.vol, 14.68, 0.02);
    assert_pp("large cap RC*", &r.decomposition.rc_rel.rows(0, 4).into_owned(), &[23.46; 4], 0.02);

    let options = LsOptions {
        benchmark: Some(cw),
        ..LsOptions::default()
    };
    let ls = least_squares_rb(&u, &params(), &b, &with_simplex(&pinned).unwrap(), &options).unwrap();
    assert_pp("LS-ERC", ls.portfolio.weights(), &[26.62, 24.20, 22.09, 21.09, 3.00, 2.00, 1.00], 0.10);
}

#[test]
fn turnover_sweep() {
    let u = eight_assets();
    let x0 = DVector::from_element(8, 0.125);
    let table = [
        (0.0, [12.50, 12.50, 12.50, 12.50, 12.50, 12.50, 12.50, 12.50]),
        (10.0, [14.86, 15.14, 12.50, 12.50, 11.20, 12.02, 12.50, 9.28]),
        (20.0, [17.28, 17.72, 12.50, 12.50, 9.70, 10.36, 11.72, 8.22]),
        (30.0, [19.68, 20.32, 12.50, 12.50, 8.49, 9.02, 10.16, 7.33]),
        (40.0, [22.01, 22.99, 12.50, 12.50, 7.27, 7.69, 8.66, 6.39]),
        (50.0, [24.28, 25.72, 12.50, 11.50, 6.28, 6.63, 7.47, 5.62]),
        (60.0, [26.58, 28.42, 11.65, 9.90, 5.66, 5.95, 6.71, 5.14]),
        (70.0, [26.83, 28.68, 11.41, 9.80, 5.61, 5.90, 6.66, 5.11]),
    ];
    for (tau, expected) in table {
        let omega = ConstraintSet::new(8).with_turnover(x0.clone(), tau / 100.0).unwrap();
        let r = solve_with(&Problem::new(u.clone(), params(), Budgets::equal(8), omega).unwrap(), Algorithm::Auto);
        assert_pp(&format!("tau {tau}"), r.weights(), &expected, 0.02);
        if tau == 70.0 {
            assert_close("realized turnover", 100.0 * r.portfolio.turnover(&x0), 61.02, 0.05);
        }
    }
}

#[test]
fn scaling_puzzle_encodings() {
    let u = eight_assets();
    let bonds = indicator(8, &[0, 1, 2, 3]);
    let equities = indicator(8, &[4, 5, 6, 7]);
    let encodings = [
        ConstraintSet::new(8).with_ge(equities.clone(), 0.3, "equity >= 30").unwrap(),
        ConstraintSet::new(8).with_le(bonds.clone(), 0.7, "bonds <= 70").unwrap(),
        ConstraintSet::new(8).with_ge(equities, 0.4, "equity >= 40").unwrap(),
        ConstraintSet::new(8).with_le(bonds, 0.6, "bonds <= 60").unwrap(),
    ];
    let options = SolverOptions {
        start: StartPoint::EqualWeight,
        ..SolverOptions::default()
    };
    let reports: Vec<SolveReport> = encodings
        .into_iter()
        .map(|omega| solve(&Problem::new(u.clone(), params(), Budgets::equal(8), omega).unwrap(), &options).unwrap())
        .collect();
    let sigma = [5.20, 5.43, 5.98, 6.56];
    let lagrangian = [13.29, 20.86, 10.68, 28.27];
    for (k, r) in reports.iter().enumerate() {
        assert_close("sigma", 100.0 * r.decomposition.vol, sigma[k], 0.05);
        assert_close("L", 100.0 * r.lagrangian, lagrangian[k], 0.05);
    }
    let first = riskbudget::select_best(&reports[..2]).unwrap();
    let second = riskbudget::select_best(&reports[2..]).unwrap();
    assert_eq!((first.best, second.best + 2), (0, 2));
}
