//! Monte Carlo simulation of the controlled execution model.
//!
//! Fills are drawn by thinning: candidate times come from a Poisson clock
//! at a rate that bounds `λe^{−κδ(t,q)}` on the current time window, and a
//! candidate at `t` is kept with probability `e^{−κ(δ(t,q) − floor)}`. The
//! reference price is sampled exactly (Gaussian increments plus the exact
//! drift integral) only at fill times and at the liquidation time.
//!
//! Each path owns a ChaCha8 stream seeded with `seed + path_index`, and path
//! results are reduced in index order by pairwise summation, so estimates
//! do not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Criterion, ModelParams, Problem};
use crate::quotes::{check_interior_admissibility, maturity_refined_grid, ValueSpec};

/// Equal windows of `[0, T]` on which the thinning rate is held fixed.
const THINNING_WINDOWS: usize = 64;
/// Windows over which [`FeedbackPolicy`] tabulates its quote minima.
const POLICY_WINDOWS: usize = 256;
/// Intervals of the remaining-time grid behind a [`FeedbackPolicy`].
pub const POLICY_GRID_INTERVALS: usize = 20_000;

/// A Markov selling policy `(t, q) ↦ δ`.
pub trait Policy: Sync {
    fn quote(&self, t: f64, q: u32) -> f64;

    /// A lower bound on `quote(s, q)` for `s ∈ [t0, t1]`, if known.
    fn floor(&self, _t0: f64, _t1: f64, _q: u32) -> Option<f64> {
        None
    }
}

/// The same quote at every state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPolicy(pub f64);

impl Policy for ConstantPolicy {
    fn quote(&self, _t: f64, _q: u32) -> f64 {
        self.0
    }

    fn floor(&self, _t0: f64, _t1: f64, _q: u32) -> Option<f64> {
        Some(self.0)
    }
}

/// Adapts a closure; thinning then relies on `delta_min` or a configured floor.
pub struct FnPolicy<F>(pub F);

impl<F: Fn(f64, u32) -> f64 + Sync> Policy for FnPolicy<F> {
    fn quote(&self, t: f64, q: u32) -> f64 {
        (self.0)(t, q)
    }
}

/// Optimal feedback `Π(δ^unc(t,q) + offset)` tabulated from a [`ValueSpec`].
///
/// Between nodes the quote is linear in `t`, which is exactly log-linear
/// interpolation of `w`. Per-window minima give tight thinning floors.
#[derive(Debug, Clone)]
pub struct FeedbackPolicy {
    params: ModelParams,
    offset: f64,
    /// Ascending calendar times.
    times: Vec<f64>,
    /// `unconstrained[q − 1][node] + offset`.
    shifted: Vec<Vec<f64>>,
    /// `window_min[q − 1][k]` over nodes touching window `k`.
    window_min: Vec<Vec<f64>>,
}

impl FeedbackPolicy {
    pub fn new(vs: &ValueSpec, offset: f64) -> Result<Self> {
        let params = vs.params().clone();
        let horizon = params.horizon;
        let n = vs.tau_grid.len();
        let times: Vec<f64> = vs.tau_grid.iter().rev().map(|tau| horizon - tau).collect();
        let mut shifted = Vec::with_capacity(params.q0 as usize);
        for q in 1..=params.q0 {
            let row = (0..n)
                .map(|j| {
                    let node = n - 1 - j;
                    let ratio = vs.log_w_at_node(node, q) - vs.log_w_at_node(node, q - 1);
                    vs.quote_from_ratio(ratio).unconstrained + offset
                })
                .collect::<Vec<f64>>();
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalBlowup { tau: vs.tau_grid[n - 1], q: q as usize });
            }
            shifted.push(row);
        }
        let window_min = shifted.iter().map(|row| window_minima(&times, row, horizon)).collect();
        Ok(Self { params, offset, times, shifted, window_min })
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    fn window_index(&self, t: f64) -> usize {
        let k = (t / self.params.horizon * POLICY_WINDOWS as f64).floor();
        (k.max(0.0) as usize).min(POLICY_WINDOWS - 1)
    }
}

fn window_minima(times: &[f64], row: &[f64], horizon: f64) -> Vec<f64> {
    (0..POLICY_WINDOWS)
        .map(|k| {
            let t0 = horizon * k as f64 / POLICY_WINDOWS as f64;
            let t1 = horizon * (k + 1) as f64 / POLICY_WINDOWS as f64;
            // nodes inside the window plus one neighbour on each side
            let lo = times.partition_point(|&t| t < t0).saturating_sub(1);
            let hi = (times.partition_point(|&t| t <= t1) + 1).min(times.len());
            row[lo..hi].iter().copied().fold(f64::INFINITY, f64::min)
        })
        .collect()
}

impl Policy for FeedbackPolicy {
    fn quote(&self, t: f64, q: u32) -> f64 {
        let row = &self.shifted[q as usize - 1];
        let last = self.times.len() - 1;
        let raw = if last == 0 {
            row[0]
        } else {
            let hi = self.times.partition_point(|&s| s < t).clamp(1, last);
            let lo = hi - 1;
            let span = self.times[hi] - self.times[lo];
            let frac = if span > 0.0 { ((t - self.times[lo]) / span).clamp(0.0, 1.0) } else { 0.0 };
            row[lo] + frac * (row[hi] - row[lo])
        };
        self.params.project(raw)
    }

    fn floor(&self, t0: f64, t1: f64, q: u32) -> Option<f64> {
        let mins = &self.window_min[q as usize - 1];
        let (k0, k1) = (self.window_index(t0), self.window_index(t1));
        let raw = mins[k0..=k1].iter().copied().fold(f64::INFINITY, f64::min);
        Some(self.params.project(raw))
    }
}

/// One simulated trajectory up to the liquidation time.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub seed: u64,
    pub fill_times: Vec<f64>,
    /// Quotes `δ` in force at each fill.
    pub fill_quotes: Vec<f64>,
    /// Execution prices `M − a + bδ`.
    pub fill_prices: Vec<f64>,
    /// Reference price at each fill, then at `tau_liq`.
    pub m_samples: Vec<f64>,
    pub x_final: f64,
    pub q_final: u32,
    /// `min(T, first time Q = 0)`.
    pub tau_liq: f64,
    /// `∫ J(Q_s) ds` up to `tau_liq`.
    pub running_cost: f64,
    /// `∫ g(s) Q_s ds` up to `tau_liq`.
    pub drift_exposure: f64,
    /// `σ² ∫ Q_s² ds` up to `tau_liq`.
    pub variance_exposure: f64,
}

impl PathRecord {
    pub fn m_final(&self) -> f64 {
        *self.m_samples.last().expect("path records the final price")
    }

    /// `X_τ + Q_τ(M_τ − I(Q_τ))`.
    pub fn terminal_wealth(&self, terminal_penalty: &[f64]) -> f64 {
        let q = self.q_final as f64;
        self.x_final + q * (self.m_final() - terminal_penalty[self.q_final as usize])
    }
}

/// Simulates one path with inventory starting at `Q0`.
pub fn simulate_path(
    problem: &Problem,
    policy: &dyn Policy,
    seed: u64,
    thinning_floor: Option<f64>,
) -> Result<PathRecord> {
    problem.validate()?;
    simulate_from(problem, problem.params.q0, policy, seed, thinning_floor)
}

fn simulate_from(
    problem: &Problem,
    start_q: u32,
    policy: &dyn Policy,
    seed: u64,
    thinning_floor: Option<f64>,
) -> Result<PathRecord> {
    let p = &problem.params;
    let signal = &problem.signal;
    let running = &problem.penalties.running;
    let horizon = p.horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut rec = PathRecord {
        seed,
        fill_times: Vec::new(),
        fill_quotes: Vec::new(),
        fill_prices: Vec::new(),
        m_samples: Vec::new(),
        x_final: p.x0,
        q_final: start_q,
        tau_liq: horizon,
        running_cost: 0.0,
        drift_exposure: 0.0,
        variance_exposure: 0.0,
    };
    let mut q = start_q;
    let mut t = 0.0;
    let mut m = p.m0;
    let mut m_time = 0.0;
    let mut level_start = 0.0;

    let close_sojourn = |rec: &mut PathRecord, q: u32, s0: f64, s1: f64| {
        let qf = q as f64;
        rec.running_cost += running[q as usize] * (s1 - s0);
        rec.drift_exposure += qf * signal.drift_integral(s0, s1);
        rec.variance_exposure += p.sigma * p.sigma * qf * qf * (s1 - s0);
    };
    let advance_price = |rng: &mut ChaCha8Rng, m: f64, s0: f64, s1: f64| {
        let mut next = m + signal.drift_integral(s0, s1);
        if p.sigma > 0.0 && s1 > s0 {
            let z: f64 = rng.sample(StandardNormal);
            next += p.sigma * (s1 - s0).sqrt() * z;
        }
        next
    };

    let mut window = 0;
    while q > 0 && window < THINNING_WINDOWS {
        let w_end = if window + 1 == THINNING_WINDOWS {
            horizon
        } else {
            horizon * (window + 1) as f64 / THINNING_WINDOWS as f64
        };
        let floor = policy.floor(t, w_end, q).or(p.delta_min).or(thinning_floor).ok_or(Error::MissingThinningBound)?;
        let rate = p.lambda * (-p.kappa * floor).exp();
        if rate.is_nan() || rate <= 0.0 {
            t = w_end;
            window += 1;
            continue;
        }
        let gap: f64 = rng.sample(Exp1);
        let candidate = t + gap / rate;
        if candidate >= w_end {
            // memoryless: restart the clock at the next window
            t = w_end;
            window += 1;
            continue;
        }
        t = candidate;
        let delta = policy.quote(t, q);
        if delta < floor {
            return Err(Error::PolicyBelowFloor { t, q, quote: delta, floor });
        }
        let u: f64 = rng.random();
        if u < (-p.kappa * (delta - floor)).exp() {
            m = advance_price(&mut rng, m, m_time, t);
            m_time = t;
            close_sojourn(&mut rec, q, level_start, t);
            level_start = t;
            let price = m - p.a + p.b * delta;
            rec.fill_times.push(t);
            rec.fill_quotes.push(delta);
            rec.fill_prices.push(price);
            rec.m_samples.push(m);
            rec.x_final += price;
            q -= 1;
        }
    }
    let tau_liq = if q == 0 { t } else { horizon };
    close_sojourn(&mut rec, q, level_start, tau_liq);
    m = advance_price(&mut rng, m, m_time, tau_liq);
    rec.m_samples.push(m);
    rec.q_final = q;
    rec.tau_liq = tau_liq;
    Ok(rec)
}

/// How a path is turned into a payoff sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// The payoff evaluated on the sampled reference price.
    Sampled,
    /// The payoff averaged over the Brownian motion given the fill path.
    /// Fill times do not depend on the price, so given the fills
    /// `∫Q dM` is Gaussian with mean `∫gQ ds` and variance `σ²∫Q² ds`;
    /// the conditional payoff is exact and has lower variance.
    #[default]
    Conditional,
}

/// Monte Carlo settings.
#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub estimator: Estimator,
    /// Thinning floor when neither the policy nor `delta_min` supplies one.
    pub thinning_floor: Option<f64>,
    /// Start inventory; `None` means `Q0`. Zero gives the liquidated state.
    pub start_inventory: Option<u32>,
}

impl McConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self { n_paths, seed, estimator: Estimator::default(), thinning_floor: None, start_inventory: None }
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn with_thinning_floor(mut self, floor: f64) -> Self {
        self.thinning_floor = Some(floor);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Per-path payoff: the payoff itself, or for CARA its log-magnitude
/// `ℓ` with payoff `−e^ℓ`.
fn path_sample(problem: &Problem, rec: &PathRecord, estimator: Estimator) -> f64 {
    let p = &problem.params;
    let cost = if problem.criterion.has_running_cost() { rec.running_cost } else { 0.0 };
    let terminal = &problem.penalties.terminal;
    let (wealth, variance) = match estimator {
        Estimator::Sampled => (rec.terminal_wealth(terminal) - cost, 0.0),
        Estimator::Conditional => {
            let q = rec.q_final as f64;
            let fills: f64 = rec.fill_quotes.iter().map(|d| p.b * d - p.a).sum();
            let start_q = rec.q_final as usize + rec.fill_times.len();
            let mean = p.x0 + start_q as f64 * p.m0 + fills + rec.drift_exposure - q * terminal[rec.q_final as usize];
            (mean - cost, rec.variance_exposure)
        }
    };
    if problem.criterion.is_cara() {
        -p.gamma * wealth + 0.5 * p.gamma * p.gamma * variance
    } else {
        wealth
    }
}

/// Monte Carlo estimate of the criterion's objective under `policy`.
pub fn estimate_objective(problem: &Problem, policy: &dyn Policy, mc: &McConfig) -> Result<MCEstimate> {
    problem.validate()?;
    if mc.n_paths < 2 {
        return Err(Error::TooFewPaths(mc.n_paths));
    }
    let start_q = mc.start_inventory.unwrap_or(problem.params.q0);
    if start_q > problem.params.q0 {
        return Err(Error::InvalidParameter(format!("start inventory {start_q} exceeds Q0")));
    }
    let samples = (0..mc.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let seed = mc.seed.wrapping_add(i);
            simulate_from(problem, start_q, policy, seed, mc.thinning_floor)
                .map(|rec| path_sample(problem, &rec, mc.estimator))
        })
        .collect::<Result<Vec<f64>>>()?;

    let (mean, stderr) =
        if problem.criterion.is_cara() { cara_moments(&samples, mc.seed)? } else { mean_stderr(&samples) };
    Ok(MCEstimate { mean, stderr, n_paths: mc.n_paths, seed: mc.seed })
}

/// Mean and standard error of `−e^{ℓ_i}`, scaled by the largest `ℓ`.
fn cara_moments(logs: &[f64], base_seed: u64) -> Result<(f64, f64)> {
    let (arg, top) =
        logs.iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, l)| if l > acc.1 { (i, l) } else { acc });
    let offending = Error::ExtremePayoff { seed: base_seed.wrapping_add(arg as u64) };
    if !top.is_finite() {
        return Err(offending);
    }
    let scaled: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let (m, se) = mean_stderr(&scaled);
    let scale = top.exp();
    let (mean, stderr) = (-scale * m, scale * se);
    if !mean.is_finite() || !stderr.is_finite() {
        return Err(offending);
    }
    Ok((mean, stderr))
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Fixed-shape pairwise summation; the result depends only on the order of `xs`.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Outcome of comparing a perturbed policy with the optimal one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    /// Zero offset: the same policy on the same seeds.
    Tie,
    /// Optimal beats the perturbation by more than two combined stderrs.
    Dominated,
    Inconclusive,
    /// The perturbation beats the optimal policy by more than two combined stderrs.
    Violated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueVerdict {
    /// `|MC(optimal) − V| ≤ 3·stderr`.
    Pass,
    Fail,
    /// Projection is active somewhere, so the closed form is not the value.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationResult {
    pub offset: f64,
    pub estimate: MCEstimate,
    /// `MC(optimal) − MC(perturbed)`.
    pub difference: f64,
    pub combined_stderr: f64,
    pub verdict: Dominance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub criterion: Criterion,
    pub estimator: Estimator,
    pub seed: u64,
    pub n_paths: usize,
    /// Closed-form `V(0, X0, M0, Q0)`.
    pub closed_form: f64,
    pub optimal: MCEstimate,
    /// `(MC − V) / stderr`; zero when both agree exactly.
    pub z_score: f64,
    pub value_verdict: ValueVerdict,
    /// Some grid quote needed projection.
    pub constrained: bool,
    /// Largest quote error of the tabulated policy.
    pub interpolation_error: f64,
    pub perturbations: Vec<PerturbationResult>,
}

impl VerificationReport {
    /// No failed value check and no perturbation that beats the optimum.
    pub fn passed(&self) -> bool {
        self.value_verdict != ValueVerdict::Fail && self.perturbations.iter().all(|p| p.verdict != Dominance::Violated)
    }
}

/// Largest interpolation error tolerated in a verification policy.
pub const MAX_POLICY_INTERPOLATION_ERROR: f64 = 1e-9;

/// Checks the closed-form value against simulation of the optimal feedback
/// and of shifted policies `δ* + ε`, all on common seeds.
pub fn verify_value_function(problem: &Problem, perturbations: &[f64], mc: &McConfig) -> Result<VerificationReport> {
    problem.validate()?;
    let p = &problem.params;
    let grid = maturity_refined_grid(p.horizon, POLICY_GRID_INTERVALS);
    let vs = ValueSpec::new(problem, &grid)?;
    let interpolation_error = vs.interpolation_error().unwrap_or(0.0);
    if interpolation_error > MAX_POLICY_INTERPOLATION_ERROR {
        return Err(Error::InvalidParameter(format!(
            "policy grid interpolation error {interpolation_error:e} exceeds {MAX_POLICY_INTERPOLATION_ERROR:e}"
        )));
    }
    let times: Vec<f64> = grid.iter().rev().map(|tau| p.horizon - tau).collect();
    let constrained = !check_interior_admissibility(&vs.surface(&times)?).all_interior;

    let closed_form = vs.value(0.0, p.x0, p.m0, p.q0)?;
    let optimal = estimate_objective(problem, &FeedbackPolicy::new(&vs, 0.0)?, mc)?;
    let diff = optimal.mean - closed_form;
    let z_score = if optimal.stderr > 0.0 {
        diff / optimal.stderr
    } else if diff.abs() <= 1e-9 * closed_form.abs().max(1.0) {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    let value_verdict = if constrained {
        ValueVerdict::NotApplicable
    } else if z_score.abs() <= 3.0 {
        ValueVerdict::Pass
    } else {
        ValueVerdict::Fail
    };

    let mut results = Vec::with_capacity(perturbations.len());
    for &offset in perturbations {
        let estimate =
            if offset == 0.0 { optimal } else { estimate_objective(problem, &FeedbackPolicy::new(&vs, offset)?, mc)? };
        let difference = optimal.mean - estimate.mean;
        let combined_stderr = optimal.stderr.hypot(estimate.stderr);
        let verdict = if offset == 0.0 {
            Dominance::Tie
        } else if difference > 2.0 * combined_stderr {
            Dominance::Dominated
        } else if difference < -2.0 * combined_stderr {
            Dominance::Violated
        } else {
            Dominance::Inconclusive
        };
        results.push(PerturbationResult { offset, estimate, difference, combined_stderr, verdict });
    }

    Ok(VerificationReport {
        criterion: problem.criterion,
        estimator: mc.estimator,
        seed: mc.seed,
        n_paths: mc.n_paths,
        closed_form,
        optimal,
        z_score,
        value_verdict,
        constrained,
        interpolation_error,
        perturbations: results,
    })
}
