//! Optimal quotes and value functions built on `log w`.
//!
//! Every criterion reduces to the same recipe: with `h = (b/κ) log w`, the
//! optimal ask is the Hamiltonian maximizer at the value gap
//! `Δ = h(t,q−1) − h(t,q)`, projected onto the admissible interval.

use crate::error::{Error, Result};
use crate::model::{CoefficientSet, Criterion, ModelParams, Problem, DEFAULT_REL_TOL};
use crate::triangular::{self, SolveInput, WMethod};

/// Utility family of a criterion; decides the Hamiltonian maximizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    RiskNeutral,
    Cara,
}

impl From<Criterion> for Family {
    fn from(c: Criterion) -> Self {
        if c.is_cara() {
            Family::Cara
        } else {
            Family::RiskNeutral
        }
    }
}

/// Unconstrained maximizer of `δ ↦ e^{−κδ}(bδ − a + Δ)`, or of its CARA
/// counterpart.
///
/// `gap` is `Δ = h(t,q−1) − h(t,q)` in price units. Project with
/// [`ModelParams::project`] for the constrained maximizer.
pub fn hamiltonian_maximizer(family: Family, gap: f64, params: &ModelParams) -> f64 {
    let shift = (params.a - gap) / params.b;
    match family {
        Family::RiskNeutral => params.risk_neutral_constant() + shift,
        Family::Cara => params.cara_constant() + shift,
    }
}

/// An ask quote before and after projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quote {
    pub unconstrained: f64,
    pub projected: f64,
}

impl Quote {
    pub fn is_interior(&self) -> bool {
        self.unconstrained == self.projected
    }
}

/// `n + 1` equally spaced points on `[0, end]`.
pub fn uniform_grid(end: f64, n: usize) -> Vec<f64> {
    assert!(n >= 1, "grid needs at least one interval");
    (0..=n).map(|i| if i == n { end } else { end * i as f64 / n as f64 }).collect()
}

/// `n + 1` points on `[0, end]` with spacing growing linearly away from 0,
/// `τ_i = end·(i/n)²`. Quotes bend most near maturity, which is `τ = 0`.
pub fn maturity_refined_grid(end: f64, n: usize) -> Vec<f64> {
    assert!(n >= 1, "grid needs at least one interval");
    (0..=n)
        .map(|i| {
            let s = i as f64 / n as f64;
            if i == n {
                end
            } else {
                end * s * s
            }
        })
        .collect()
}

/// Solved value data for one problem: `log w` on an ascending `τ` grid.
#[derive(Debug, Clone)]
pub struct ValueSpec {
    pub problem: Problem,
    pub tau_grid: Vec<f64>,
    pub method: WMethod,
    /// `log w[τ_index][q]`.
    log_w: Vec<Vec<f64>>,
    coeffs: Option<CoefficientSet>,
}

impl ValueSpec {
    /// Constant-signal problem, routed through [`triangular::solve`]. Rows
    /// that overflow `f64` are recomputed in log space.
    pub fn new(problem: &Problem, tau_grid: &[f64]) -> Result<Self> {
        problem.validate()?;
        let coeffs = problem.coefficients()?;
        check_grid_covers(tau_grid, problem.params.horizon)?;
        let table = match triangular::solve(&SolveInput::Constant(&coeffs), tau_grid, DEFAULT_REL_TOL) {
            Ok(t) => t,
            Err(Error::NumericalBlowup { .. }) => return Self::log_domain(problem, coeffs, tau_grid),
            Err(e) => return Err(e),
        };
        let mut log_w = Vec::with_capacity(tau_grid.len());
        for (i, row) in table.values.iter().enumerate() {
            if row.iter().all(|v| v.is_finite() && *v > 0.0) {
                log_w.push(row.iter().map(|v| v.ln()).collect());
            } else {
                log_w.push(triangular::log_w(&coeffs, tau_grid[i]));
            }
        }
        Ok(Self {
            problem: problem.clone(),
            tau_grid: tau_grid.to_vec(),
            method: table.method,
            log_w,
            coeffs: Some(coeffs),
        })
    }

    fn log_domain(problem: &Problem, coeffs: CoefficientSet, tau_grid: &[f64]) -> Result<Self> {
        let log_w = tau_grid.iter().map(|&tau| triangular::log_w(&coeffs, tau)).collect();
        Ok(Self {
            problem: problem.clone(),
            tau_grid: tau_grid.to_vec(),
            method: WMethod::NonDegenerate,
            log_w,
            coeffs: Some(coeffs),
        })
    }

    /// Exact time-dependent recursion for a deterministic signal, with
    /// `A_q(t) = (κ/b)Ψ(q; g(t))` integrated by RK4.
    pub fn time_dependent(problem: &Problem, tau_grid: &[f64], step: Option<f64>) -> Result<Self> {
        problem.validate()?;
        check_grid_covers(tau_grid, problem.params.horizon)?;
        let params = &problem.params;
        let at_zero = problem.coefficients_at_level(problem.signal.level(0.0))?;
        let scale = params.kappa / params.b;
        let rates = |t: f64, q: usize| {
            let g = problem.signal.level(t);
            scale * crate::model::psi_at_level(params, g, &problem.penalties, problem.criterion, q as u32)
        };
        let input = SolveInput::TimeDependent {
            rates: &rates,
            execution: at_zero.execution,
            terminal: &at_zero.terminal,
            horizon: params.horizon,
        };
        let table = triangular::solve_with_step(&input, tau_grid, DEFAULT_REL_TOL, step)?;
        if !table.all_positive() {
            return Err(Error::NumericalBlowup { tau: *tau_grid.last().unwrap(), q: table.max_q() });
        }
        let log_w = table.values.iter().map(|row| row.iter().map(|v| v.ln()).collect()).collect();
        Ok(Self { problem: problem.clone(), tau_grid: tau_grid.to_vec(), method: table.method, log_w, coeffs: None })
    }

    /// Constant coefficients behind this table, if the signal is constant.
    pub fn coefficients(&self) -> Option<&CoefficientSet> {
        self.coeffs.as_ref()
    }

    pub fn params(&self) -> &ModelParams {
        &self.problem.params
    }

    pub fn criterion(&self) -> Criterion {
        self.problem.criterion
    }

    pub fn q0(&self) -> u32 {
        self.problem.params.q0
    }

    /// `log w` at grid node `i`.
    pub fn log_w_at_node(&self, i: usize, q: u32) -> f64 {
        self.log_w[i][q as usize]
    }

    /// `log w(t, q)` at calendar time `t`, linear in `log w` between nodes.
    pub fn log_w(&self, t: f64, q: u32) -> Result<f64> {
        let (lo, hi, frac) = self.locate(t)?;
        self.check_q(q)?;
        let a = self.log_w[lo][q as usize];
        let b = self.log_w[hi][q as usize];
        let v = a + frac * (b - a);
        assert!(v.is_finite(), "w(t={t}, q={q}) is not positive");
        Ok(v)
    }

    /// `log(w(t,q)/w(t,q−1))`.
    pub fn log_ratio(&self, t: f64, q: u32) -> Result<f64> {
        if q == 0 {
            return Err(Error::NoInventory);
        }
        self.check_q(q)?;
        let (lo, hi, frac) = self.locate(t)?;
        let at = |i: usize| self.log_w[i][q as usize] - self.log_w[i][q as usize - 1];
        let (a, b) = (at(lo), at(hi));
        let v = a + frac * (b - a);
        assert!(v.is_finite(), "w(t={t}) is not positive at q={q} or q={}", q - 1);
        Ok(v)
    }

    /// `h(t,q) = (b/κ) log w(t,q)`.
    pub fn h(&self, t: f64, q: u32) -> Result<f64> {
        let p = self.params();
        Ok(p.b / p.kappa * self.log_w(t, q)?)
    }

    fn check_q(&self, q: u32) -> Result<()> {
        if q > self.q0() {
            return Err(Error::InvalidParameter(format!("inventory {q} exceeds Q0 = {}", self.q0())));
        }
        Ok(())
    }

    /// Bracketing nodes and weight for calendar time `t`.
    fn locate(&self, t: f64) -> Result<(usize, usize, f64)> {
        let horizon = self.params().horizon;
        let slack = 1e-12 * horizon.max(1.0);
        if !(t >= -slack && t <= horizon + slack) {
            return Err(Error::InvalidParameter(format!("time {t} outside [0, {horizon}]")));
        }
        let tau = (horizon - t).max(0.0);
        let grid = &self.tau_grid;
        let last = grid.len() - 1;
        if last == 0 {
            return Ok((0, 0, 0.0));
        }
        let hi = grid.partition_point(|&g| g < tau).clamp(1, last);
        let lo = hi - 1;
        let span = grid[hi] - grid[lo];
        let frac = if span > 0.0 { ((tau - grid[lo]) / span).clamp(0.0, 1.0) } else { 0.0 };
        Ok((lo, hi, frac))
    }

    /// Largest quote error of log-linear interpolation, measured at the
    /// midpoint of every grid interval against the exact constant-coefficient
    /// solution. `None` for time-dependent tables.
    pub fn interpolation_error(&self) -> Option<f64> {
        let coeffs = self.coeffs.as_ref()?;
        let kappa = self.params().kappa;
        let mut worst = 0.0_f64;
        for (i, pair) in self.tau_grid.windows(2).enumerate() {
            let mid = 0.5 * (pair[0] + pair[1]);
            let exact = exact_log_row(coeffs, mid);
            for q in 1..exact.len() {
                let interp = 0.5
                    * ((self.log_w[i][q] - self.log_w[i][q - 1]) + (self.log_w[i + 1][q] - self.log_w[i + 1][q - 1]));
                let err = (interp - (exact[q] - exact[q - 1])).abs() / kappa;
                worst = worst.max(err);
            }
        }
        Some(worst)
    }

    /// Quote for a given `log(w_q/w_{q−1})`.
    pub fn quote_from_ratio(&self, ratio: f64) -> Quote {
        quote_from_log_ratio(self.params(), self.criterion(), ratio)
    }

    /// Optimal ask at `(t, q)`.
    pub fn quote(&self, t: f64, q: u32) -> Result<Quote> {
        let ratio = self.log_ratio(t, q)?;
        Ok(quote_from_log_ratio(self.params(), self.criterion(), ratio))
    }

    /// Value function at `(t, x, M, q)`.
    pub fn value(&self, t: f64, x: f64, m: f64, q: u32) -> Result<f64> {
        let wealth = if q == 0 {
            self.locate(t)?;
            x
        } else {
            x + q as f64 * m + self.h(t, q)?
        };
        Ok(match Family::from(self.criterion()) {
            Family::RiskNeutral => wealth,
            Family::Cara => -(-self.params().gamma * wealth).exp(),
        })
    }

    /// Quotes on a calendar-time grid.
    pub fn surface(&self, t_grid: &[f64]) -> Result<QuoteSurface> {
        let levels = t_grid.iter().map(|&t| self.problem.signal.level(t)).collect();
        let mut rows = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            let row = (1..=self.q0()).map(|q| self.quote(t, q)).collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(QuoteSurface::from_rows(t_grid, levels, rows, self.params(), false))
    }
}

fn check_grid_covers(tau_grid: &[f64], horizon: f64) -> Result<()> {
    let (Some(first), Some(last)) = (tau_grid.first(), tau_grid.last()) else {
        return Err(Error::InvalidParameter("empty tau grid".into()));
    };
    if *first != 0.0 || (*last - horizon).abs() > 1e-12 * horizon.max(1.0) {
        return Err(Error::InvalidParameter(format!("tau grid must span [0, {horizon}], got [{first}, {last}]")));
    }
    Ok(())
}

fn exact_log_row(coeffs: &CoefficientSet, tau: f64) -> Vec<f64> {
    let row = triangular::w_exact(coeffs, tau);
    if row.iter().all(|v| v.is_finite() && *v > 0.0) {
        row.iter().map(|v| v.ln()).collect()
    } else {
        triangular::log_w(coeffs, tau)
    }
}

fn quote_from_log_ratio(params: &ModelParams, criterion: Criterion, ratio: f64) -> Quote {
    let gap = -(params.b / params.kappa) * ratio;
    let unconstrained = hamiltonian_maximizer(Family::from(criterion), gap, params);
    Quote { unconstrained, projected: params.project(unconstrained) }
}

/// Optimal ask `(δ^unc, δ*)` at `(t, q)`; `q = 0` is [`Error::NoInventory`].
pub fn optimal_quote(vs: &ValueSpec, t: f64, q: u32) -> Result<Quote> {
    vs.quote(t, q)
}

/// Value function; exact `x` or `−e^{−γx}` at `q = 0`.
pub fn value_function(vs: &ValueSpec, t: f64, x: f64, m: f64, q: u32) -> Result<f64> {
    vs.value(t, x, m, q)
}

/// Quotes on a `(t, q)` grid, `q = 1..=Q0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteSurface {
    pub t_grid: Vec<f64>,
    /// Signal level `g(t)` used at each time.
    pub signal_levels: Vec<f64>,
    /// `unconstrained[i][q − 1]`.
    pub unconstrained: Vec<Vec<f64>>,
    pub projected: Vec<Vec<f64>>,
    pub interior: Vec<Vec<bool>>,
    pub delta_min: Option<f64>,
    pub delta_max: Option<f64>,
    /// Set for frozen-signal surfaces, which are a plug-in heuristic rather
    /// than the solution of the time-dependent problem.
    pub heuristic: bool,
}

impl QuoteSurface {
    fn from_rows(
        t_grid: &[f64],
        signal_levels: Vec<f64>,
        rows: Vec<Vec<Quote>>,
        params: &ModelParams,
        heuristic: bool,
    ) -> Self {
        let pick = |f: fn(&Quote) -> f64| rows.iter().map(|r| r.iter().map(f).collect()).collect();
        let unconstrained = pick(|q| q.unconstrained);
        let projected = pick(|q| q.projected);
        let interior = rows.iter().map(|r| r.iter().map(|q| params.is_admissible(q.unconstrained)).collect()).collect();
        Self {
            t_grid: t_grid.to_vec(),
            signal_levels,
            unconstrained,
            projected,
            interior,
            delta_min: params.delta_min,
            delta_max: params.delta_max,
            heuristic,
        }
    }

    pub fn max_q(&self) -> u32 {
        self.unconstrained.first().map_or(0, |r| r.len() as u32)
    }

    pub fn unconstrained_at(&self, i: usize, q: u32) -> f64 {
        self.unconstrained[i][q as usize - 1]
    }

    pub fn projected_at(&self, i: usize, q: u32) -> f64 {
        self.projected[i][q as usize - 1]
    }

    pub fn interior_at(&self, i: usize, q: u32) -> bool {
        self.interior[i][q as usize - 1]
    }
}

/// Which bound an unconstrained quote crossed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    BelowMin,
    AboveMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub t: f64,
    pub q: u32,
    pub quote: f64,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub all_interior: bool,
    pub violations: Vec<Violation>,
}

/// Grid points where the projection is active. Any violation means the
/// closed-form value no longer describes the constrained problem.
pub fn check_interior_admissibility(surface: &QuoteSurface) -> AdmissibilityReport {
    let mut violations = Vec::new();
    for (i, &t) in surface.t_grid.iter().enumerate() {
        for (k, &quote) in surface.unconstrained[i].iter().enumerate() {
            let side = match (surface.delta_min, surface.delta_max) {
                (Some(lo), _) if quote < lo => Some(Side::BelowMin),
                (_, Some(hi)) if quote > hi => Some(Side::AboveMax),
                _ => None,
            };
            if let Some(side) = side {
                violations.push(Violation { t, q: k as u32 + 1, quote, side });
            }
        }
    }
    AdmissibilityReport { all_interior: violations.is_empty(), violations }
}

/// Frozen-signal heuristic: at each `t`, the constant-coefficient quote with
/// `g ← g(t)` and remaining time `T − t`.
pub fn frozen_signal_surface(problem: &Problem, t_grid: &[f64]) -> Result<QuoteSurface> {
    problem.validate()?;
    let params = &problem.params;
    let mut levels = Vec::with_capacity(t_grid.len());
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if !(0.0..=params.horizon).contains(&t) {
            return Err(Error::InvalidParameter(format!("time {t} outside [0, {}]", params.horizon)));
        }
        let g = problem.signal.level(t);
        let coeffs = problem.coefficients_at_level(g)?;
        let tau = params.horizon - t;
        let log_row = match triangular::solve(&SolveInput::Constant(&coeffs), &[tau], DEFAULT_REL_TOL) {
            Ok(table) if table.all_positive() && table.values[0].iter().all(|v| v.is_finite()) => {
                table.values[0].iter().map(|v| v.ln()).collect::<Vec<_>>()
            }
            Ok(_) | Err(Error::NumericalBlowup { .. }) => triangular::log_w(&coeffs, tau),
            Err(e) => return Err(e),
        };
        let row = (1..=params.q0 as usize)
            .map(|q| quote_from_log_ratio(params, problem.criterion, log_row[q] - log_row[q - 1]))
            .collect();
        levels.push(g);
        rows.push(row);
    }
    Ok(QuoteSurface::from_rows(t_grid, levels, rows, params, true))
}
