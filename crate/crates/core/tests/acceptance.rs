//! Acceptance suite. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::{
    cara_benchmark_quote, case_params, check_scan, monotonicity_scans, rel_err, rn_benchmark_quote, scaled_err,
};
use execquote::asymptotics::{fit_empirical_rate, Regime};
use execquote::config::ExperimentConfig;
use execquote::experiments::{default_horizons, run_verification};
use execquote::model::{
    certainty_equivalent_cost, CoefficientSet, Criterion, ModelParams, PenaltySpec, Problem, SignalSpec,
    TerminalPenalty,
};
use execquote::quotes::{uniform_grid, ValueSpec};
use execquote::simulate::{Dominance, ValueVerdict};
use execquote::triangular::{solve, solve_degenerate, solve_nondegenerate, solve_quadrature, SolveInput};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn config_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// Closed forms against RK4 on random coefficient draws.
fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    let draws = 200;
    for draw in 0..draws {
        let q = rng.random_range(1..=10usize);
        let degenerate = draw % 10 == 0;
        let rates: Vec<f64> =
            (0..=q).map(|i| if i == 0 || degenerate { 0.0 } else { rng.random_range(-1.0..=1.0) }).collect();
        let terminal: Vec<f64> = (0..=q).map(|i| if i == 0 { 1.0 } else { rng.random_range(0.01..=1.0) }).collect();
        let execution = rng.random_range(0.0..=2.0);
        let tau_max: f64 = rng.random_range(1.0..=100.0);
        let grid: Vec<f64> = (0..=4).map(|k| tau_max * k as f64 / 4.0).collect();
        let cs = CoefficientSet { rates: rates.clone(), execution, terminal: terminal.clone() };
        let closed = if degenerate { solve_degenerate(&cs, &grid) } else { solve_nondegenerate(&cs, &grid) }
            .map_err(|e| format!("draw {draw}: {e}"))?;
        let r = |_t: f64, i: usize| rates[i];
        let rk = solve_quadrature(&r, execution, &terminal, tau_max, &grid, 2.5e-3).map_err(|e| e.to_string())?;
        for (a, b) in closed.values.iter().flatten().zip(rk.values.iter().flatten()) {
            worst = worst.max(rel_err(*a, *b));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("{draws} draws, max rel err {worst:.2e}, {secs:.2} s");
    if worst <= 1e-8 && secs < 10.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Both benchmark expressions on a 100-point τ grid, q ≤ 5.
fn benchmarks() -> Outcome {
    let grid = uniform_grid(30.0, 99);
    let mut worst_rn = 0.0_f64;
    let mut worst_cara = 0.0_f64;
    for alpha in [0.001, 0.005] {
        let rn = Problem::new(
            ModelParams::baseline(5),
            SignalSpec::constant(0.0),
            PenaltySpec::linear_terminal(alpha, 5),
            Criterion::CaseI,
        );
        let params = case_params(5, 0.0, 0.01);
        let flat = PenaltySpec::from_builtins(&TerminalPenalty::Flat { alpha }, &Default::default(), 5);
        let cara = Problem::new(params.clone(), SignalSpec::constant(0.0), flat, Criterion::CaseIII);
        let vs_rn = ValueSpec::new(&rn, &grid).map_err(|e| e.to_string())?;
        let vs_cara = ValueSpec::new(&cara, &grid).map_err(|e| e.to_string())?;
        for &tau in &grid {
            for q in 1..=5 {
                let t = 30.0 - tau;
                let got = vs_rn.quote(t, q).unwrap().unconstrained;
                worst_rn = worst_rn.max(rel_err(got, rn_benchmark_quote(&rn.params, alpha, q, tau)));
                if tau > 0.0 {
                    let got = vs_cara.quote(t, q).unwrap().unconstrained;
                    let expected = cara_benchmark_quote(&params, alpha, q, tau);
                    worst_cara = worst_cara.max(scaled_err(got, expected, 1.0 / params.kappa));
                }
            }
        }
    }
    let detail = format!("risk-neutral max rel err {worst_rn:.2e}, exponential-utility {worst_cara:.2e}");
    if worst_rn <= 1e-12 && worst_cara <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Monte Carlo check of the value and of the ±2/κ perturbations.
fn verification() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (label, file) in [("I", "verify-caseI.toml"), ("III", "verify-caseIII.toml"), ("IV", "verify-caseIV.toml")] {
        let start = Instant::now();
        let cfg = ExperimentConfig::load(&config_path(file)).map_err(|e| e.to_string())?;
        let report = run_verification(&cfg).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let dominated =
            report.perturbations.iter().filter(|p| p.offset != 0.0).all(|p| p.verdict == Dominance::Dominated);
        let pass = report.value_verdict == ValueVerdict::Pass && dominated && secs < 60.0;
        ok &= pass;
        lines.push(format!(
            "case {label}: z={:.2}, perturbations {}, {secs:.1} s",
            report.z_score,
            if dominated { "dominated" } else { "NOT dominated" }
        ));
    }
    if ok {
        Ok(lines.join("; "))
    } else {
        Err(lines.join("; "))
    }
}

fn draw_strategy() -> impl Strategy<Value = (CoefficientSet, f64)> {
    (1usize..=10, any::<bool>())
        .prop_flat_map(|(q, zero)| {
            let rates = if zero { Just(vec![0.0; q]).boxed() } else { prop::collection::vec(-1.0f64..1.0, q).boxed() };
            (rates, prop::collection::vec(1e-3f64..1.0, q), 0.0f64..2.0, 1e-3f64..20.0)
        })
        .prop_map(|(rates, terminal, execution, tau)| {
            let cs = CoefficientSet {
                rates: std::iter::once(0.0).chain(rates).collect(),
                execution,
                terminal: std::iter::once(1.0).chain(terminal).collect(),
            };
            (cs, tau)
        })
}

/// Positivity and boundary values on ≥ 10⁴ property-test draws.
fn positivity() -> Outcome {
    let cases = 10_000;
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    let result = runner.run(&draw_strategy(), |(cs, tau)| {
        let grid = [0.0, 0.5 * tau, tau];
        let routed = solve(&SolveInput::Constant(&cs), &grid, 1e-8).unwrap();
        let r = |_t: f64, q: usize| cs.rates[q];
        let rk = solve_quadrature(&r, cs.execution, &cs.terminal, tau, &grid, 1e-2).unwrap();
        for table in [&routed, &rk] {
            prop_assert!(table.all_positive());
            prop_assert!(table.values.iter().all(|row| row[0] == 1.0));
            prop_assert_eq!(&table.values[0], &cs.terminal);
        }
        Ok(())
    });
    match result {
        Ok(()) => Ok(format!("{cases} draws x 2 solvers, 0 violations")),
        Err(e) => Err(format!("violation: {e}")),
    }
}

/// Long-horizon growth in the three regimes.
fn asymptotics() -> Outcome {
    let pen = |q0| PenaltySpec::linear_terminal(0.001, q0);
    let linear = Problem::new(ModelParams::baseline(2), SignalSpec::constant(1e-4), pen(2), Criterion::CaseI);
    let horizons: Vec<f64> = (1..=10).map(|k| 100.0 * k as f64).collect();
    let mut worst_linear = 0.0_f64;
    for q in 1..=2 {
        let r = fit_empirical_rate(&linear, q, &horizons).map_err(|e| e.to_string())?;
        if r.regime != Regime::NonDegenerate || (r.theoretical_rate - 1e-4).abs() > 1e-15 {
            return Err(format!("linear case classified as {:?} with rate {}", r.regime, r.theoretical_rate));
        }
        worst_linear = worst_linear.max(r.rel_error);
    }

    let flat = Problem::new(ModelParams::baseline(2), SignalSpec::constant(0.0), pen(2), Criterion::CaseI);
    let mut worst_log = 0.0_f64;
    for q in 1..=2 {
        let r = fit_empirical_rate(&flat, q, &default_horizons(Regime::Degenerate)).map_err(|e| e.to_string())?;
        if r.regime != Regime::Degenerate {
            return Err(format!("flat case classified as {:?}", r.regime));
        }
        worst_log = worst_log.max((r.fitted_rate - 1e-3).abs() / 1e-3);
    }

    let averse = Problem::new(case_params(1, 0.1, 0.05), SignalSpec::constant(0.0), pen(1), Criterion::CaseIII);
    if averse.psi(1).unwrap() >= 0.0 {
        return Err("Psi(1) is not negative".into());
    }
    let decade: Vec<f64> = (0..=8).map(|k| 100.0 * 10f64.powf(k as f64 / 8.0)).collect();
    let bounded = fit_empirical_rate(&averse, 1, &decade).map_err(|e| e.to_string())?;

    let detail = format!(
        "linear rel err {worst_linear:.2e}, log coefficient rel err {worst_log:.2e}, bounded variation {:.2e}",
        bounded.variation
    );
    if worst_linear <= 0.05 && worst_log <= 0.05 && bounded.variation < 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// First-order small-γ correction of the utility quote constant.
fn small_gamma() -> Outcome {
    let params = case_params(1, 0.0, 1e-3);
    let problem = Problem::new(params.clone(), SignalSpec::constant(0.0), PenaltySpec::zero(1), Criterion::CaseIII);
    let vs = ValueSpec::new(&problem, &[0.0, 30.0]).map_err(|e| e.to_string())?;
    let measured = vs.quote_from_ratio(0.0).unconstrained - 1.0 / params.kappa;
    let predicted = -params.b * params.gamma / (2.0 * params.kappa * params.kappa);
    let err = rel_err(measured, predicted);
    let detail = format!("measured {measured:.6e}, predicted {predicted:.6e}, rel err {err:.2e}");
    if err <= 0.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// A running cost of ½σ²γq² reproduces the utility rates but not its quotes.
fn coincidence() -> Outcome {
    let (sigma, gamma) = (0.1, 0.05);
    let running: Vec<f64> = (0..=2).map(|q| certainty_equivalent_cost(sigma, gamma, q)).collect();
    let ii = Problem::new(
        ModelParams::baseline(2),
        SignalSpec::constant(0.0),
        PenaltySpec::new(TerminalPenalty::Linear { alpha: 0.001 }.table(2), running),
        Criterion::CaseII,
    );
    let iii = Problem::new(
        case_params(2, sigma, gamma),
        SignalSpec::constant(0.0),
        PenaltySpec::linear_terminal(0.001, 2),
        Criterion::CaseIII,
    );
    let (a, b) = (ii.coefficients().unwrap(), iii.coefficients().unwrap());
    let bitwise = a.rates.iter().zip(&b.rates).all(|(x, y)| x.to_bits() == y.to_bits());
    let grid = uniform_grid(30.0, 600);
    let (va, vb) = (ValueSpec::new(&ii, &grid).unwrap(), ValueSpec::new(&iii, &grid).unwrap());
    let mut min_gap = f64::INFINITY;
    for &t in &grid[..grid.len() - 1] {
        for q in 1..=2 {
            let gap = (va.quote(t, q).unwrap().unconstrained - vb.quote(t, q).unwrap().unconstrained).abs();
            min_gap = min_gap.min(gap);
        }
    }
    let detail = format!("rates bitwise equal: {bitwise}, smallest quote gap before maturity {min_gap:.3e}");
    if bitwise && min_gap > 0.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Monotone quotes along every parameter ladder.
fn monotonicity() -> Outcome {
    let scans = monotonicity_scans();
    for scan in &scans {
        check_scan(scan, 601)?;
    }
    Ok(format!("{} scans on 601 times", scans.len()))
}

/// `verify` output bytes with 1 and 8 worker threads.
fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let cfg = config_path("verify-caseIV.toml");
    for (dir, threads) in dirs.iter().zip(["1", "8"]) {
        let out = Command::new(env!("CARGO_BIN_EXE_execquote"))
            .args(["verify", "--threads", threads, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path())
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("verify exited with {:?}", out.status.code()));
        }
    }
    for name in ["verify.csv", "verify_report.txt"] {
        let a = std::fs::read(dirs[0].path().join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(name)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{name} differs between 1 and 8 threads"));
        }
    }
    Ok("verify.csv and verify_report.txt identical".into())
}

fn main() -> ExitCode {
    let criteria: [Check; 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("benchmark formulas", benchmarks),
        ("verification", verification),
        ("positivity and boundary", positivity),
        ("asymptotics", asymptotics),
        ("small-gamma expansion", small_gamma),
        ("coefficient coincidence", coincidence),
        ("monotonicity", monotonicity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
