//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the library's solvers.
#![allow(dead_code)]

use execquote::model::{Criterion, ModelParams, PenaltySpec, Problem, SignalSpec};

pub fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

pub fn rel_err(x: f64, reference: f64) -> f64 {
    (x - reference).abs() / reference.abs().max(f64::MIN_POSITIVE)
}

/// Relative error with the reference magnitude floored at `scale`.
pub fn scaled_err(x: f64, reference: f64, scale: f64) -> f64 {
    (x - reference).abs() / reference.abs().max(scale)
}

/// Classical RK4 on `v' = A v + C v_{prev}` with `v_0 ≡ 1`, fixed step count.
pub fn rk4(rates: &[f64], c: f64, g: &[f64], tau: f64, steps: usize) -> Vec<f64> {
    rk4_varying(&|_, q| rates[q], c, g, tau, steps)
}

/// RK4 with rates `A(τ, q)` given in remaining time.
pub fn rk4_varying(rates: &dyn Fn(f64, usize) -> f64, c: f64, g: &[f64], tau: f64, steps: usize) -> Vec<f64> {
    let n = g.len();
    let h = tau / steps as f64;
    let deriv = |s: f64, v: &[f64]| -> Vec<f64> {
        let mut d = vec![0.0; n];
        for q in 1..n {
            d[q] = rates(s, q) * v[q] + c * v[q - 1];
        }
        d
    };
    let mut v = g.to_vec();
    for k in 0..steps {
        let s = k as f64 * h;
        let k1 = deriv(s, &v);
        let y2: Vec<f64> = (0..n).map(|i| v[i] + 0.5 * h * k1[i]).collect();
        let k2 = deriv(s + 0.5 * h, &y2);
        let y3: Vec<f64> = (0..n).map(|i| v[i] + 0.5 * h * k2[i]).collect();
        let k3 = deriv(s + 0.5 * h, &y3);
        let y4: Vec<f64> = (0..n).map(|i| v[i] + h * k3[i]).collect();
        let k4 = deriv(s + h, &y4);
        for i in 1..n {
            v[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    v
}

/// Sum-of-ratios closed form for pairwise distinct rates, written out
/// literally (no cancellation control; fine for well-separated rates).
pub fn sum_of_ratios(rates: &[f64], c: f64, g: &[f64], tau: f64) -> Vec<f64> {
    let phi = |r: usize, q: usize| -> f64 {
        (r..=q)
            .map(|i| {
                let denom: f64 = (r..=q).filter(|&j| j != i).map(|j| rates[i] - rates[j]).product();
                (rates[i] * tau).exp() / denom
            })
            .sum()
    };
    (0..rates.len())
        .map(|q| {
            if q == 0 {
                return 1.0;
            }
            let mut w = c.powi(q as i32) * phi(0, q);
            for (r, gr) in g.iter().enumerate().take(q + 1).skip(1) {
                w += c.powi((q - r) as i32) * gr * phi(r, q);
            }
            w
        })
        .collect()
}

/// Polynomial form when every rate is zero.
pub fn polynomial(c: f64, g: &[f64], tau: f64) -> Vec<f64> {
    (0..g.len()).map(|q| (0..=q).map(|j| g[q - j] * (c * tau).powi(j as i32) / factorial(j as u32)).sum()).collect()
}

/// Zero-drift risk-neutral benchmark with `I(q) = αq`.
pub fn rn_benchmark_w(p: &ModelParams, alpha: f64, q: u32, tau: f64) -> f64 {
    let c = p.lambda * (-1.0f64).exp();
    (0..=q)
        .map(|i| {
            let rest = (q - i) as f64;
            c.powi(i as i32) / factorial(i) * (-p.kappa * alpha * rest * rest).exp() * tau.powi(i as i32)
        })
        .sum()
}

pub fn rn_benchmark_quote(p: &ModelParams, alpha: f64, q: u32, tau: f64) -> f64 {
    let ratio = rn_benchmark_w(p, alpha, q, tau) / rn_benchmark_w(p, alpha, q - 1, tau);
    (1.0 + ratio.ln()) / p.kappa
}

/// `λ̂ = λ(κ/(κ+γ))^{κ/γ+1}`; the base is taken through `ln_1p` because the
/// exponent is large enough to amplify its rounding error.
pub fn lambda_hat(p: &ModelParams) -> f64 {
    p.lambda * (-(p.gamma / p.kappa).ln_1p() * (p.kappa / p.gamma + 1.0)).exp()
}

/// Zero-drift, zero-volatility exponential-utility benchmark with flat
/// `I(q) = α`.
pub fn cara_benchmark_quote(p: &ModelParams, alpha: f64, q: u32, tau: f64) -> f64 {
    let lh = lambda_hat(p);
    let below: f64 = (0..q)
        .map(|j| lh.powi(j as i32) / factorial(j) * (-p.kappa * alpha * (q - j) as f64).exp() * tau.powi(j as i32))
        .sum();
    let top = lh.powi(q as i32) * tau.powi(q as i32) / factorial(q);
    -alpha + (top / below).ln_1p() / p.kappa + (p.gamma / p.kappa).ln_1p() / p.gamma
}

/// Reference calibration as a full problem.
pub fn baseline(q0: u32, criterion: Criterion, penalties: PenaltySpec) -> Problem {
    Problem::new(ModelParams::baseline(q0), SignalSpec::constant(0.0), penalties, criterion)
}

pub fn case_params(q0: u32, sigma: f64, gamma: f64) -> ModelParams {
    ModelParams { sigma, gamma, ..ModelParams::baseline(q0) }
}

/// Problems ordered along one parameter; quotes must move monotonically.
pub struct Scan {
    pub name: String,
    pub problems: Vec<Problem>,
    pub increasing: bool,
}

fn scan(name: String, problems: Vec<Problem>, increasing: bool) -> Scan {
    Scan { name, problems, increasing }
}

fn case(criterion: Criterion, g: f64, alpha: f64, beta: f64, sigma: f64, gamma: f64) -> Problem {
    let (sigma, gamma) = if criterion.is_cara() { (sigma, gamma) } else { (0.0, 0.0) };
    let beta = if criterion.has_running_cost() { beta } else { 0.0 };
    Problem::new(
        case_params(2, sigma, gamma),
        SignalSpec::constant(g),
        PenaltySpec::linear_quadratic(alpha, beta, 2),
        criterion,
    )
}

/// Ladders over the reference configurations.
pub fn monotonicity_scans() -> Vec<Scan> {
    let ladder = [-3e-4, -2e-4, -1e-4, 0.0, 1e-4, 2e-4, 3e-4];
    let mut out = Vec::new();
    for c in Criterion::ALL {
        out.push(scan(format!("{c} g"), ladder.iter().map(|&g| case(c, g, 0.001, 1e-4, 0.1, 0.01)).collect(), true));
        out.push(scan(
            format!("{c} alpha"),
            [0.001, 0.005].iter().map(|&a| case(c, 0.0, a, 1e-4, 0.1, 0.01)).collect(),
            false,
        ));
    }
    for c in [Criterion::CaseII, Criterion::CaseIV] {
        out.push(scan(
            format!("{c} beta"),
            [1e-4, 5e-4, 1e-3].iter().map(|&b| case(c, 0.0, 0.001, b, 0.1, 0.01)).collect(),
            false,
        ));
    }
    for c in [Criterion::CaseIII, Criterion::CaseIV] {
        out.push(scan(
            format!("{c} gamma"),
            [0.01, 0.05].iter().map(|&g| case(c, 0.0, 0.001, 1e-4, 0.1, g)).collect(),
            false,
        ));
        out.push(scan(
            format!("{c} sigma"),
            [0.01, 0.1].iter().map(|&s| case(c, 0.0, 0.001, 1e-4, s, 0.05)).collect(),
            false,
        ));
    }
    out
}

/// Checks one scan on `t_points` uniform times and every `q ≤ Q0`: weakly
/// monotone everywhere, strictly at `t = 0`.
pub fn check_scan(scan: &Scan, t_points: usize) -> Result<(), String> {
    use execquote::quotes::{uniform_grid, ValueSpec};
    let horizon = scan.problems[0].params.horizon;
    let times = uniform_grid(horizon, t_points - 1);
    let specs: Vec<ValueSpec> =
        scan.problems.iter().map(|p| ValueSpec::new(p, &times).map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    for pair in specs.windows(2) {
        for q in 1..=pair[0].q0() {
            for &t in &times {
                let lo = pair[0].quote(t, q).unwrap().unconstrained;
                let hi = pair[1].quote(t, q).unwrap().unconstrained;
                let step = if scan.increasing { hi - lo } else { lo - hi };
                let slack = 1e-14 * lo.abs().max(hi.abs());
                if step < -slack || (t == 0.0 && step <= 0.0) {
                    return Err(format!("{}: q={q} t={t}: {lo} then {hi}", scan.name));
                }
            }
        }
    }
    Ok(())
}
