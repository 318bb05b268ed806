#![allow(clippy::needless_range_loop)]

mod common;

use common::{polynomial, rel_err, rk4, rk4_varying, sum_of_ratios};
use execquote::model::CoefficientSet;
use execquote::triangular::{
    log_w, phi, solve, solve_degenerate, solve_nondegenerate, solve_quadrature, SolveInput, WMethod,
};
use execquote::Error;

const C_BASE: f64 = 0.306_566_200_976_201_9;

fn set(rates: &[f64], c: f64, g: &[f64]) -> CoefficientSet {
    CoefficientSet { rates: rates.to_vec(), execution: c, terminal: g.to_vec() }
}

#[test]
fn nondegenerate_matches_sum_of_ratios_and_rk4() {
    let rates = [0.0, 0.3, -0.5, 0.9, -1.2];
    let g = [1.0, 0.8, 0.5, 0.3, 0.1];
    let cs = set(&rates, C_BASE, &g);
    let grid = [0.0, 0.5, 3.0, 10.0];
    let table = solve_nondegenerate(&cs, &grid).unwrap();
    assert_eq!(table.method, WMethod::NonDegenerate);
    for (i, &tau) in grid.iter().enumerate() {
        let lit = sum_of_ratios(&rates, C_BASE, &g, tau);
        let ode = rk4(&rates, C_BASE, &g, tau, 20_000);
        for q in 0..rates.len() {
            assert!(rel_err(table.get(i, q), lit[q]) < 1e-12, "tau {tau} q {q}");
            assert!(rel_err(table.get(i, q), ode[q]) < 1e-10, "tau {tau} q {q}");
        }
    }
}

#[test]
fn degenerate_matches_polynomial() {
    let g = [1.0, (-1.0f64).exp(), (-4.0f64).exp(), (-9.0f64).exp()];
    let cs = set(&[0.0; 4], C_BASE, &g);
    let grid = [0.0, 1.0, 30.0, 1000.0];
    let table = solve_degenerate(&cs, &grid).unwrap();
    for (i, &tau) in grid.iter().enumerate() {
        let expected = polynomial(C_BASE, &g, tau);
        for q in 0..4 {
            assert!(rel_err(table.get(i, q), expected[q]) < 1e-14);
        }
    }
    assert!(matches!(solve_degenerate(&set(&[0.0, 0.1], 1.0, &[1.0, 1.0]), &grid), Err(Error::NotDegenerate)));
}

#[test]
fn router_picks_the_right_solver() {
    let grid = [0.0, 5.0];
    let g = [1.0, 0.5, 0.25];
    let cases = [
        (vec![0.0, 0.0, 0.0], WMethod::Degenerate),
        (vec![0.0, 0.2, -0.2], WMethod::NonDegenerate),
        (vec![0.0, 0.2, 0.2], WMethod::Hybrid),
        (vec![0.0, 0.0, 0.2], WMethod::Quadrature),
    ];
    for (rates, method) in cases {
        let cs = set(&rates, C_BASE, &g);
        let table = solve(&SolveInput::Constant(&cs), &grid, 1e-8).unwrap();
        assert_eq!(table.method, method, "{rates:?}");
        let ode = rk4(&rates, C_BASE, &g, 5.0, 20_000);
        for q in 0..3 {
            assert!(rel_err(table.get(1, q), ode[q]) < 1e-9, "{rates:?} q {q}");
        }
    }
}

#[test]
fn nondegenerate_rejects_clustered_rates() {
    let cs = set(&[0.0, 0.5, 0.5 + 1e-12], 1.0, &[1.0, 1.0, 1.0]);
    match solve_nondegenerate(&cs, &[1.0]) {
        Err(Error::DegenerateCoefficients { pairs }) => assert_eq!(pairs, vec![(1, 2)]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn phi_is_continuous_across_near_coincidence() {
    // Φ_{0,1}(τ) = (e^{Aτ} − 1)/A → τ as A → 0
    let tau = 2.0;
    for a in [1e-3f64, 1e-5, 1e-7] {
        let exact = (a * tau).exp_m1() / a;
        assert!(rel_err(phi(0, 1, &[0.0, a], tau).unwrap(), exact) < 1e-12);
    }
    assert!(phi(0, 1, &[0.0, 1e-10], tau).is_err());
}

#[test]
fn quadrature_step_halving() {
    let rates = [0.0, 0.7, -0.4, 0.2];
    let g = [1.0, 0.9, 0.8, 0.7];
    let r = |_t: f64, q: usize| rates[q];
    let grid = [0.0, 10.0];
    let coarse = solve_quadrature(&r, C_BASE, &g, 10.0, &grid, 1e-2).unwrap();
    let fine = solve_quadrature(&r, C_BASE, &g, 10.0, &grid, 5e-3).unwrap();
    let exact = sum_of_ratios(&rates, C_BASE, &g, 10.0);
    for q in 1..4 {
        assert!(rel_err(coarse.get(1, q), fine.get(1, q)) < 1e-9);
        assert!(rel_err(fine.get(1, q), exact[q]) < 1e-10);
    }
}

#[test]
fn time_dependent_rates_against_test_integrator() {
    let horizon = 4.0;
    let base = [0.0, 0.3, -0.1];
    let g = [1.0, 0.6, 0.3];
    let r = |t: f64, q: usize| base[q] + 0.2 * (q as f64) * t.sin();
    let table = solve_quadrature(&r, C_BASE, &g, horizon, &[0.0, 2.0, 4.0], 1e-3).unwrap();
    let in_tau = |tau: f64, q: usize| r(horizon - tau, q);
    for (i, tau) in [(1, 2.0), (2, 4.0)] {
        let ode = rk4_varying(&in_tau, C_BASE, &g, tau, 40_000);
        for q in 0..3 {
            assert!(rel_err(table.get(i, q), ode[q]) < 1e-11, "tau {tau} q {q}");
        }
    }
}

#[test]
fn log_domain_row_agrees_and_survives_overflow() {
    let rates = [0.0, 0.2, -0.3, 0.1];
    let g = [1.0, 0.5, 0.4, 0.2];
    let cs = set(&rates, C_BASE, &g);
    let direct = sum_of_ratios(&rates, C_BASE, &g, 7.0);
    let logs = log_w(&cs, 7.0);
    for q in 0..4 {
        assert!((logs[q] - direct[q].ln()).abs() < 1e-12);
    }
    // e^{0.2·1e4} overflows f64, its logarithm does not
    let big = log_w(&cs, 1e4);
    assert!(big.iter().all(|l| l.is_finite()));
    assert!((big[1] - (0.2 * 1e4 + (g[1] + C_BASE / 0.2).ln())).abs() < 1e-9);
}

#[test]
fn rejects_bad_grids() {
    let cs = set(&[0.0, 0.0], 1.0, &[1.0, 1.0]);
    for grid in [&[][..], &[1.0, 1.0][..], &[-1.0][..], &[f64::NAN][..]] {
        assert!(matches!(solve(&SolveInput::Constant(&cs), grid, 1e-8), Err(Error::InvalidParameter(_))));
    }
}
