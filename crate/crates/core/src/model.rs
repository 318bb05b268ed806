//! Model parameters, signals, penalties and the map from an objective
//! criterion to the reduced triangular-system coefficients.
//!
//! All four objectives reduce to
//!
//! ```text
//! dv_q/dτ = A_q v_q + C v_{q-1},   v_q(0) = G_q,   v_0 ≡ 1
//! ```
//!
//! and differ only in `A_q` (the [`CoefficientSet::rates`]) and `C`
//! (the [`CoefficientSet::execution`] coefficient).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance used to decide whether two rates coincide.
pub const DEFAULT_REL_TOL: f64 = 1e-8;

/// Market and objective constants shared by every criterion.
///
/// `delta_min` / `delta_max` set to `None` mean the corresponding side of
/// the admissible quote interval is unbounded, so projection is an exact
/// no-op on that side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub lambda: f64,
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub gamma: f64,
    pub horizon: f64,
    pub q0: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_max: Option<f64>,
    #[serde(default)]
    pub m0: f64,
    #[serde(default)]
    pub x0: f64,
}

impl ModelParams {
    /// Reference calibration: λ=5/6, κ=1000, a=0, b=1, T=30, no bounds.
    pub fn baseline(q0: u32) -> Self {
        Self {
            lambda: 5.0 / 6.0,
            kappa: 1000.0,
            a: 0.0,
            b: 1.0,
            sigma: 0.0,
            gamma: 0.0,
            horizon: 30.0,
            q0,
            delta_min: None,
            delta_max: None,
            m0: 100.0,
            x0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("lambda", self.lambda),
            ("kappa", self.kappa),
            ("a", self.a),
            ("b", self.b),
            ("sigma", self.sigma),
            ("gamma", self.gamma),
            ("horizon", self.horizon),
            ("m0", self.m0),
            ("x0", self.x0),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        // lambda = 0 is admitted as the no-execution limit (C = 0).
        if self.lambda < 0.0 {
            return Err(invalid("lambda must be >= 0"));
        }
        if self.kappa <= 0.0 {
            return Err(invalid("kappa must be > 0"));
        }
        if self.b <= 0.0 {
            return Err(invalid("b must be > 0"));
        }
        if self.a < 0.0 {
            return Err(invalid("a must be >= 0"));
        }
        if self.sigma < 0.0 {
            return Err(invalid("sigma must be >= 0"));
        }
        if self.gamma < 0.0 {
            return Err(invalid("gamma must be >= 0"));
        }
        if self.horizon <= 0.0 {
            return Err(invalid("horizon must be > 0"));
        }
        if self.q0 < 1 {
            return Err(invalid("q0 must be >= 1"));
        }
        for (name, v) in [("delta_min", self.delta_min), ("delta_max", self.delta_max)] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "{name} must be finite (omit it for an unbounded side)"
                    )));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (self.delta_min, self.delta_max) {
            if lo >= hi {
                return Err(invalid("delta_min must be < delta_max"));
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, criterion: Criterion) -> Result<()> {
        self.validate()?;
        if criterion.is_cara() && self.gamma <= 0.0 {
            return Err(invalid("gamma must be > 0 for exponential-utility criteria"));
        }
        Ok(())
    }

    /// Projection onto `[delta_min, delta_max]`; unbounded sides pass through.
    pub fn project(&self, quote: f64) -> f64 {
        let mut q = quote;
        if let Some(hi) = self.delta_max {
            q = q.min(hi);
        }
        if let Some(lo) = self.delta_min {
            q = q.max(lo);
        }
        q
    }

    pub fn is_admissible(&self, quote: f64) -> bool {
        self.delta_min.is_none_or(|lo| quote >= lo) && self.delta_max.is_none_or(|hi| quote <= hi)
    }

    /// Constant `1/κ` of the risk-neutral maximizer.
    pub fn risk_neutral_constant(&self) -> f64 {
        1.0 / self.kappa
    }

    /// Constant `(1/(bγ)) log((κ+bγ)/κ)` of the CARA maximizer.
    pub fn cara_constant(&self) -> f64 {
        let bg = self.b * self.gamma;
        (bg / self.kappa).ln_1p() / bg
    }

    /// `λ e^{-κa/b - 1}`.
    pub fn risk_neutral_execution(&self) -> f64 {
        self.lambda * (-self.kappa * self.a / self.b - 1.0).exp()
    }

    /// `λ̂ = λ (κ/(κ+bγ))^{κ/(bγ)+1} e^{-κa/b}`, evaluated as the exponential
    /// of a product of logs so exponents near 1e5 stay accurate.
    pub fn cara_execution(&self) -> f64 {
        let bg = self.b * self.gamma;
        let log_base = -(bg / self.kappa).ln_1p();
        let exponent = self.kappa / bg + 1.0;
        self.lambda * (exponent * log_base - self.kappa * self.a / self.b).exp()
    }
}

fn invalid(msg: &str) -> Error {
    Error::InvalidParameter(msg.to_string())
}

/// A user-supplied time profile `ξ(t)`; the signal level is `g·ξ(t)`.
#[derive(Clone)]
pub struct SignalShape {
    pub label: String,
    pub shape: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for SignalShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SignalShape").field("label", &self.label).finish_non_exhaustive()
    }
}

impl PartialEq for SignalShape {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.shape, &other.shape)
    }
}

/// Drift `g(s,t)` of the reference price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Constant {
        g: f64,
    },
    /// `g e^{-rate·t}`
    ExpDecay {
        g: f64,
        rate: f64,
    },
    /// `g e^{-rate·|t - center|}`
    DelayedDecay {
        g: f64,
        rate: f64,
        center: f64,
    },
    /// `g ξ(t)` for an arbitrary bounded shape.
    #[serde(skip)]
    Custom {
        g: f64,
        shape: SignalShape,
    },
}

impl SignalSpec {
    pub fn constant(g: f64) -> Self {
        SignalSpec::Constant { g }
    }

    pub fn custom(g: f64, label: &str, shape: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        SignalSpec::Custom { g, shape: SignalShape { label: label.to_string(), shape: Arc::new(shape) } }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, SignalSpec::Constant { .. })
    }

    /// The scale `g` in front of the time profile.
    pub fn base_level(&self) -> f64 {
        match *self {
            SignalSpec::Constant { g }
            | SignalSpec::ExpDecay { g, .. }
            | SignalSpec::DelayedDecay { g, .. }
            | SignalSpec::Custom { g, .. } => g,
        }
    }

    /// Same profile with the scale replaced.
    pub fn with_level(&self, level: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            SignalSpec::Constant { g }
            | SignalSpec::ExpDecay { g, .. }
            | SignalSpec::DelayedDecay { g, .. }
            | SignalSpec::Custom { g, .. } => *g = level,
        }
        out
    }

    pub fn level(&self, t: f64) -> f64 {
        match self {
            SignalSpec::Constant { g } => *g,
            SignalSpec::ExpDecay { g, rate } => g * (-rate * t).exp(),
            SignalSpec::DelayedDecay { g, rate, center } => g * (-rate * (t - center).abs()).exp(),
            SignalSpec::Custom { g, shape } => g * (shape.shape)(t),
        }
    }

    /// `∫_{t0}^{t1} g(s,u) du`, in closed form for the builtin profiles.
    pub fn drift_integral(&self, t0: f64, t1: f64) -> f64 {
        match self {
            SignalSpec::Constant { g } => g * (t1 - t0),
            SignalSpec::ExpDecay { g, rate } => g * exp_decay_integral(*rate, t0, t1),
            SignalSpec::DelayedDecay { g, rate, center } => {
                // split at the kink
                let c = *center;
                let mut total = 0.0;
                if t0 < c {
                    let hi = t1.min(c);
                    // e^{-r(c-u)} on [t0, hi]
                    total += exp_decay_integral(*rate, c - hi, c - t0);
                }
                if t1 > c {
                    let lo = t0.max(c);
                    total += exp_decay_integral(*rate, lo - c, t1 - c);
                }
                g * total
            }
            SignalSpec::Custom { .. } => adaptive_simpson(&|u| self.level(u), t0, t1, 1e-13, 40),
        }
    }

    /// Checks the profile is finite at every grid time.
    pub fn validate_on_grid(&self, times: &[f64]) -> Result<()> {
        for &t in times {
            if !self.level(t).is_finite() {
                return Err(Error::InvalidParameter(format!("signal is not finite at t={t}")));
            }
        }
        if let SignalSpec::ExpDecay { rate, .. } | SignalSpec::DelayedDecay { rate, .. } = self {
            if !rate.is_finite() {
                return Err(invalid("signal decay rate must be finite"));
            }
        }
        Ok(())
    }
}

/// `∫_{s0}^{s1} e^{-rate·u} du`.
fn exp_decay_integral(rate: f64, s0: f64, s1: f64) -> f64 {
    if rate == 0.0 {
        return s1 - s0;
    }
    // e^{-r s0} (1 - e^{-r(s1-s0)}) / r, with expm1 for small r·Δ
    (-rate * s0).exp() * -(-rate * (s1 - s0)).exp_m1() / rate
}

pub(crate) fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// Builtin families for the terminal per-share penalty `I(q)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalPenalty {
    #[default]
    None,
    /// `I(q) = αq`
    Linear {
        alpha: f64,
    },
    /// `I(q) = α` for `q ≥ 1`
    Flat {
        alpha: f64,
    },
    Table {
        values: Vec<f64>,
    },
}

/// Builtin families for the running inventory penalty `J(q)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RunningPenalty {
    #[default]
    None,
    /// `J(q) = βq²`
    Quadratic {
        beta: f64,
    },
    Table {
        values: Vec<f64>,
    },
}

impl TerminalPenalty {
    pub fn table(&self, q0: u32) -> Vec<f64> {
        match self {
            TerminalPenalty::None => vec![0.0; q0 as usize + 1],
            TerminalPenalty::Linear { alpha } => (0..=q0).map(|q| alpha * q as f64).collect(),
            TerminalPenalty::Flat { alpha } => (0..=q0).map(|q| if q == 0 { 0.0 } else { *alpha }).collect(),
            TerminalPenalty::Table { values } => values.clone(),
        }
    }
}

impl RunningPenalty {
    pub fn table(&self, q0: u32) -> Vec<f64> {
        match self {
            RunningPenalty::None => vec![0.0; q0 as usize + 1],
            RunningPenalty::Quadratic { beta } => (0..=q0).map(|q| beta * (q as f64 * q as f64)).collect(),
            RunningPenalty::Table { values } => values.clone(),
        }
    }
}

/// Penalty tables indexed by inventory `0..=Q0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    /// `I(q)`, price units per share.
    pub terminal: Vec<f64>,
    /// `J(q)`, price units per unit time.
    pub running: Vec<f64>,
}

impl PenaltySpec {
    pub fn new(terminal: Vec<f64>, running: Vec<f64>) -> Self {
        Self { terminal, running }
    }

    pub fn from_builtins(terminal: &TerminalPenalty, running: &RunningPenalty, q0: u32) -> Self {
        Self { terminal: terminal.table(q0), running: running.table(q0) }
    }

    pub fn zero(q0: u32) -> Self {
        Self::from_builtins(&TerminalPenalty::None, &RunningPenalty::None, q0)
    }

    pub fn linear_terminal(alpha: f64, q0: u32) -> Self {
        Self::from_builtins(&TerminalPenalty::Linear { alpha }, &RunningPenalty::None, q0)
    }

    pub fn linear_quadratic(alpha: f64, beta: f64, q0: u32) -> Self {
        Self::from_builtins(&TerminalPenalty::Linear { alpha }, &RunningPenalty::Quadratic { beta }, q0)
    }

    pub fn validate(&self, q0: u32) -> Result<()> {
        let n = q0 as usize + 1;
        for (name, table) in [("terminal", &self.terminal), ("running", &self.running)] {
            if table.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "{name} penalty table has {} entries, expected {n}",
                    table.len()
                )));
            }
            if table[0] != 0.0 {
                return Err(Error::InvalidParameter(format!("{name} penalty must vanish at q=0")));
            }
            if table.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidParameter(format!("{name} penalty entries must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// The four objective criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    /// Expected terminal wealth.
    CaseI,
    /// Expected terminal wealth less a running inventory cost.
    CaseII,
    /// Exponential utility of terminal wealth.
    CaseIII,
    /// Exponential utility of terminal wealth less a running inventory cost.
    CaseIV,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [Criterion::CaseI, Criterion::CaseII, Criterion::CaseIII, Criterion::CaseIV];

    pub fn is_cara(self) -> bool {
        matches!(self, Criterion::CaseIII | Criterion::CaseIV)
    }

    pub fn has_running_cost(self) -> bool {
        matches!(self, Criterion::CaseII | Criterion::CaseIV)
    }

    pub fn label(self) -> &'static str {
        match self {
            Criterion::CaseI => "CaseI",
            Criterion::CaseII => "CaseII",
            Criterion::CaseIII => "CaseIII",
            Criterion::CaseIV => "CaseIV",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Everything that defines one control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub params: ModelParams,
    pub signal: SignalSpec,
    pub penalties: PenaltySpec,
    pub criterion: Criterion,
}

impl Problem {
    pub fn new(params: ModelParams, signal: SignalSpec, penalties: PenaltySpec, criterion: Criterion) -> Self {
        Self { params, signal, penalties, criterion }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate_for(self.criterion)?;
        self.penalties.validate(self.params.q0)
    }

    pub fn coefficients(&self) -> Result<CoefficientSet> {
        reduced_coefficients(&self.params, &self.signal, &self.penalties, self.criterion)
    }

    pub fn coefficients_at_level(&self, g: f64) -> Result<CoefficientSet> {
        coefficients_at_level(&self.params, g, &self.penalties, self.criterion)
    }

    pub fn psi(&self, q: u32) -> Result<f64> {
        psi(&self.params, &self.signal, &self.penalties, self.criterion, q)
    }

    pub fn with_signal(&self, signal: SignalSpec) -> Self {
        Self { signal, ..self.clone() }
    }

    pub fn with_params(&self, params: ModelParams) -> Self {
        Self { params, ..self.clone() }
    }
}

/// Reduced data `(A_q, C, G_q)` of the triangular system.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    /// `A_0..A_{Q0}`, per unit time, `A_0 = 0`.
    pub rates: Vec<f64>,
    /// `C`, per unit time.
    pub execution: f64,
    /// `G_0..G_{Q0}`, `G_0 = 1`.
    pub terminal: Vec<f64>,
}

impl CoefficientSet {
    pub fn max_q(&self) -> usize {
        self.rates.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() || self.rates.len() != self.terminal.len() {
            return Err(invalid("rates and terminal arrays must have equal, non-zero length"));
        }
        if self.rates[0] != 0.0 || self.terminal[0] != 1.0 {
            return Err(invalid("A_0 must be 0 and G_0 must be 1"));
        }
        if !(self.execution.is_finite() && self.execution >= 0.0) {
            return Err(invalid("execution coefficient must be finite and >= 0"));
        }
        if self.rates.iter().any(|a| !a.is_finite()) {
            return Err(invalid("rates must be finite"));
        }
        if self.terminal.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(invalid("terminal values must be finite and > 0"));
        }
        Ok(())
    }
}

/// `½σ²γq²`, the certainty-equivalent cost of holding `q` under CARA.
pub fn certainty_equivalent_cost(sigma: f64, gamma: f64, q: u32) -> f64 {
    let q = q as f64;
    0.5 * sigma * sigma * gamma * (q * q)
}

/// Effective continuation value `Ψ(q)` for a signal level `g`.
pub fn psi_at_level(params: &ModelParams, g: f64, penalties: &PenaltySpec, criterion: Criterion, q: u32) -> f64 {
    let drift = g * q as f64;
    let running = penalties.running.get(q as usize).copied().unwrap_or(0.0);
    match criterion {
        Criterion::CaseI => drift,
        Criterion::CaseII => drift - running,
        Criterion::CaseIII => drift - certainty_equivalent_cost(params.sigma, params.gamma, q),
        Criterion::CaseIV => drift - certainty_equivalent_cost(params.sigma, params.gamma, q) - running,
    }
}

/// `Ψ(q)` for a constant signal.
pub fn psi(
    params: &ModelParams,
    signal: &SignalSpec,
    penalties: &PenaltySpec,
    criterion: Criterion,
    q: u32,
) -> Result<f64> {
    match signal {
        SignalSpec::Constant { g } => Ok(psi_at_level(params, *g, penalties, criterion, q)),
        _ => Err(Error::UnsupportedSignal),
    }
}

/// Coefficients for a fixed drift level `g`; used directly by the
/// frozen-signal heuristic.
pub fn coefficients_at_level(
    params: &ModelParams,
    g: f64,
    penalties: &PenaltySpec,
    criterion: Criterion,
) -> Result<CoefficientSet> {
    params.validate_for(criterion)?;
    penalties.validate(params.q0)?;
    let scale = params.kappa / params.b;
    let rates = (0..=params.q0)
        .map(|q| if q == 0 { 0.0 } else { scale * psi_at_level(params, g, penalties, criterion, q) })
        .collect();
    let execution = if criterion.is_cara() { params.cara_execution() } else { params.risk_neutral_execution() };
    let terminal = penalties.terminal.iter().enumerate().map(|(q, i)| (-scale * q as f64 * i).exp()).collect();
    Ok(CoefficientSet { rates, execution, terminal })
}

pub fn reduced_coefficients(
    params: &ModelParams,
    signal: &SignalSpec,
    penalties: &PenaltySpec,
    criterion: Criterion,
) -> Result<CoefficientSet> {
    match signal {
        SignalSpec::Constant { g } => coefficients_at_level(params, *g, penalties, criterion),
        _ => Err(Error::UnsupportedSignal),
    }
}

/// Routing class of a rate array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    AllZero,
    Distinct,
    Clustered(Vec<(usize, usize)>),
}

pub fn classify_rates(rates: &[f64], rel_tol: f64) -> Classification {
    let max_abs = rates.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    let threshold = rel_tol * max_abs.max(1.0);
    if max_abs <= threshold {
        return Classification::AllZero;
    }
    let mut pairs = Vec::new();
    for i in 0..rates.len() {
        for j in i + 1..rates.len() {
            if (rates[i] - rates[j]).abs() <= threshold {
                pairs.push((i, j));
            }
        }
    }
    if pairs.is_empty() {
        Classification::Distinct
    } else {
        Classification::Clustered(pairs)
    }
}

pub fn classify_coefficients(coeffs: &CoefficientSet, rel_tol: f64) -> Classification {
    classify_rates(&coeffs.rates, rel_tol)
}
