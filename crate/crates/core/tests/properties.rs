mod common;

use common::rel_err;
use execquote::model::{CoefficientSet, Criterion, ModelParams, PenaltySpec, Problem, SignalSpec};
use execquote::quotes::ValueSpec;
use execquote::triangular::{solve, solve_quadrature, SolveInput};
use proptest::prelude::*;

fn coefficients() -> impl Strategy<Value = CoefficientSet> {
    (1usize..=10)
        .prop_flat_map(|q| {
            (prop::collection::vec(-1.0f64..1.0, q), prop::collection::vec(0.01f64..1.0, q), 0.0f64..2.0)
        })
        .prop_map(|(rates, terminal, execution)| CoefficientSet {
            rates: std::iter::once(0.0).chain(rates).collect(),
            execution,
            terminal: std::iter::once(1.0).chain(terminal).collect(),
        })
}

fn params() -> impl Strategy<Value = (ModelParams, Criterion, f64, f64, f64)> {
    (
        1u32..=5,
        0.1f64..2.0,
        100.0f64..2000.0,
        0.0f64..0.01,
        0.5f64..2.0,
        0.0f64..0.2,
        1e-4f64..0.1,
        prop::sample::select(Criterion::ALL.to_vec()),
        -5e-4f64..5e-4,
        0.0f64..0.005,
        0.0f64..1e-3,
    )
        .prop_map(|(q0, lambda, kappa, a, b, sigma, gamma, criterion, g, alpha, beta)| {
            let mut p = ModelParams::baseline(q0);
            p.lambda = lambda;
            p.kappa = kappa;
            p.a = a;
            p.b = b;
            p.sigma = sigma;
            p.gamma = gamma;
            (p, criterion, g, alpha, beta)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn solutions_are_positive_with_fixed_boundaries(cs in coefficients(), tau in 0.0f64..20.0) {
        let grid = [0.0, tau.max(1e-3)];
        let routed = solve(&SolveInput::Constant(&cs), &grid, 1e-8).unwrap();
        let rates = |_t: f64, q: usize| cs.rates[q];
        let rk = solve_quadrature(&rates, cs.execution, &cs.terminal, grid[1], &grid, 1e-2).unwrap();
        for table in [&routed, &rk] {
            prop_assert!(table.all_positive());
            for i in 0..2 {
                prop_assert_eq!(table.get(i, 0), 1.0);
            }
            prop_assert_eq!(&table.values[0], &cs.terminal);
        }
        for q in 0..cs.rates.len() {
            prop_assert!(rel_err(routed.get(1, q), rk.get(1, q)) < 1e-7);
        }
    }

    #[test]
    fn rates_are_scaled_effective_values((p, criterion, g, alpha, beta) in params()) {
        let problem = Problem::new(p.clone(), SignalSpec::constant(g), PenaltySpec::linear_quadratic(alpha, beta, p.q0), criterion);
        let cs = problem.coefficients().unwrap();
        prop_assert_eq!(cs.rates[0], 0.0);
        for q in 1..=p.q0 {
            let expected = p.kappa / p.b * problem.psi(q).unwrap();
            prop_assert!((cs.rates[q as usize] - expected).abs() <= 1e-12 * expected.abs().max(1e-12));
        }
    }

    #[test]
    fn projection_is_a_clamp(lo in -0.01f64..0.01, width in 1e-6f64..0.01, x in -0.05f64..0.05) {
        let mut p = ModelParams::baseline(1);
        p.delta_min = Some(lo);
        p.delta_max = Some(lo + width);
        prop_assert_eq!(p.project(x), x.clamp(lo, lo + width));
        p.delta_min = None;
        p.delta_max = None;
        prop_assert_eq!(p.project(x), x);
    }

    #[test]
    fn projected_quotes_clamp_unconstrained(
        (p, criterion, g, alpha, beta) in params(),
        lo in 0.0f64..0.003,
        width in 1e-4f64..0.003,
        t_frac in 0.0f64..1.0,
    ) {
        let mut p = p;
        p.delta_min = Some(lo);
        p.delta_max = Some(lo + width);
        let problem = Problem::new(p.clone(), SignalSpec::constant(g), PenaltySpec::linear_quadratic(alpha, beta, p.q0), criterion);
        let vs = ValueSpec::new(&problem, &[0.0, 10.0, 30.0]).unwrap();
        let t = 30.0 * t_frac;
        for q in 1..=p.q0 {
            let quote = vs.quote(t, q).unwrap();
            prop_assert_eq!(quote.projected, quote.unconstrained.clamp(lo, lo + width));
            prop_assert_eq!(quote.is_interior(), (lo..=lo + width).contains(&quote.unconstrained));
        }
    }
}
