//! Solvers for the common triangular system in remaining time `τ = T − t`:
//!
//! ```text
//! dv_q/dτ = A_q v_q + C v_{q−1},   v_q(0) = G_q,   v_0 ≡ 1.
//! ```
//!
//! Three interchangeable routes: the divided-difference closed form
//! (distinct `A_q`), the polynomial closed form (all `A_q = 0`), and an RK4
//! oracle that also covers clustered and time-dependent rates.

mod divided;
mod quadrature;

pub use quadrature::default_step;

use divided::{combine, exp_divided_differences, LogPos};
use quadrature::Rk4Problem;

use crate::error::{Error, Result};
use crate::model::{classify_rates, Classification, CoefficientSet, DEFAULT_REL_TOL};

/// Which route produced a [`WTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WMethod {
    NonDegenerate,
    Degenerate,
    Quadrature,
    /// Closed form on the low levels, RK4 above the first clustered level.
    Hybrid,
}

/// `w[τ_index][q]` on an ascending grid of remaining times.
#[derive(Debug, Clone, PartialEq)]
pub struct WTable {
    pub tau_grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub method: WMethod,
}

impl WTable {
    pub fn max_q(&self) -> usize {
        self.values.first().map_or(0, |r| r.len() - 1)
    }

    pub fn get(&self, tau_index: usize, q: usize) -> f64 {
        self.values[tau_index][q]
    }

    /// `log w(τ, q)`, linear in `log w` between grid points.
    ///
    /// Panics if `τ` is outside the grid.
    pub fn log_w(&self, tau: f64, q: usize) -> f64 {
        let grid = &self.tau_grid;
        let last = grid.len() - 1;
        assert!(tau >= grid[0] - 1e-12 && tau <= grid[last] + 1e-12, "tau {tau} outside [{}, {}]", grid[0], grid[last]);
        if last == 0 {
            return self.values[0][q].ln();
        }
        let hi = grid.partition_point(|&g| g < tau).clamp(1, last);
        let lo = hi - 1;
        let span = grid[hi] - grid[lo];
        let frac = if span > 0.0 { ((tau - grid[lo]) / span).clamp(0.0, 1.0) } else { 0.0 };
        let a = self.values[lo][q].ln();
        let b = self.values[hi][q].ln();
        a + frac * (b - a)
    }

    pub fn all_positive(&self) -> bool {
        self.values.iter().flatten().all(|v| *v > 0.0)
    }
}

/// Inputs accepted by [`solve`].
pub enum SolveInput<'a> {
    Constant(&'a CoefficientSet),
    /// `A_q(t)` evaluated at calendar time `t = horizon − τ`.
    TimeDependent {
        rates: &'a dyn Fn(f64, usize) -> f64,
        execution: f64,
        terminal: &'a [f64],
        horizon: f64,
    },
}

fn check_grid(tau_grid: &[f64]) -> Result<()> {
    if tau_grid.is_empty() {
        return Err(Error::InvalidParameter("empty tau grid".into()));
    }
    if tau_grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidParameter("tau grid must be finite and >= 0".into()));
    }
    if tau_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("tau grid must be strictly ascending".into()));
    }
    Ok(())
}

/// `Φ_{r,q}(τ) = Σ_{i=r}^{q} e^{A_i τ} / Π_{j≠i} (A_i − A_j)`.
pub fn phi(r: usize, q: usize, rates: &[f64], tau: f64) -> Result<f64> {
    if r > q || q >= rates.len() {
        return Err(Error::InvalidParameter(format!("need r <= q < {}, got r={r}, q={q}", rates.len())));
    }
    let nodes = &rates[r..=q];
    if let Classification::Clustered(pairs) = classify_rates(nodes, DEFAULT_REL_TOL) {
        return Err(Error::DegenerateCoefficients { pairs: pairs.into_iter().map(|(i, j)| (i + r, j + r)).collect() });
    }
    if nodes.len() > 1 && classify_rates(nodes, DEFAULT_REL_TOL) == Classification::AllZero {
        return Err(Error::DegenerateCoefficients { pairs: vec![(r, q)] });
    }
    Ok(exp_divided_differences::<f64>(nodes, tau).get(0, nodes.len() - 1))
}

/// `w` at a single remaining time from the divided-difference closed form.
/// Valid for any rates, including coincident ones.
fn closed_form_row(coeffs: &CoefficientSet, tau: f64) -> Vec<f64> {
    let dd = exp_divided_differences::<f64>(&coeffs.rates, tau);
    let mut row = combine(&dd, coeffs.execution, &coeffs.terminal);
    row[0] = 1.0;
    row
}

fn degenerate_row(coeffs: &CoefficientSet, tau: f64) -> Vec<f64> {
    let n = coeffs.terminal.len();
    let c = coeffs.execution;
    // term_i = (Cτ)^i / i!
    let mut powers = Vec::with_capacity(n);
    let mut term = 1.0;
    for i in 0..n {
        if i > 0 {
            term *= c * tau / i as f64;
        }
        powers.push(term);
    }
    let mut row: Vec<f64> = (0..n).map(|q| (0..=q).map(|i| powers[i] * coeffs.terminal[q - i]).sum()).collect();
    row[0] = 1.0;
    row
}

fn finite_rows(rows: &[Vec<f64>], tau_grid: &[f64]) -> Result<()> {
    for (row, &tau) in rows.iter().zip(tau_grid) {
        if let Some(q) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { tau, q });
        }
    }
    Ok(())
}

pub fn solve_nondegenerate(coeffs: &CoefficientSet, tau_grid: &[f64]) -> Result<WTable> {
    solve_nondegenerate_with_tol(coeffs, tau_grid, DEFAULT_REL_TOL)
}

pub fn solve_nondegenerate_with_tol(coeffs: &CoefficientSet, tau_grid: &[f64], rel_tol: f64) -> Result<WTable> {
    coeffs.validate()?;
    check_grid(tau_grid)?;
    match classify_rates(&coeffs.rates, rel_tol) {
        Classification::Distinct => {}
        Classification::AllZero => {
            let n = coeffs.rates.len();
            let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            return Err(Error::DegenerateCoefficients { pairs });
        }
        Classification::Clustered(pairs) => return Err(Error::DegenerateCoefficients { pairs }),
    }
    let values: Vec<Vec<f64>> = tau_grid.iter().map(|&tau| closed_form_row(coeffs, tau)).collect();
    finite_rows(&values, tau_grid)?;
    Ok(WTable { tau_grid: tau_grid.to_vec(), values, method: WMethod::NonDegenerate })
}

/// `w_q(τ) = Σ_i (C^i / i!) G_{q−i} τ^i` for all-zero rates.
pub fn solve_degenerate(coeffs: &CoefficientSet, tau_grid: &[f64]) -> Result<WTable> {
    solve_degenerate_with_tol(coeffs, tau_grid, DEFAULT_REL_TOL)
}

pub fn solve_degenerate_with_tol(coeffs: &CoefficientSet, tau_grid: &[f64], rel_tol: f64) -> Result<WTable> {
    coeffs.validate()?;
    check_grid(tau_grid)?;
    if classify_rates(&coeffs.rates, rel_tol) != Classification::AllZero {
        return Err(Error::NotDegenerate);
    }
    let values: Vec<Vec<f64>> = tau_grid.iter().map(|&tau| degenerate_row(coeffs, tau)).collect();
    finite_rows(&values, tau_grid)?;
    Ok(WTable { tau_grid: tau_grid.to_vec(), values, method: WMethod::Degenerate })
}

/// RK4 oracle. `rates(t, q)` is evaluated at calendar time `t = horizon − τ`;
/// the value at `q = 0` is ignored.
pub fn solve_quadrature(
    rates: &dyn Fn(f64, usize) -> f64,
    execution: f64,
    terminal: &[f64],
    horizon: f64,
    tau_grid: &[f64],
    step: f64,
) -> Result<WTable> {
    check_grid(tau_grid)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter("quadrature step must be > 0".into()));
    }
    if terminal.is_empty() || terminal[0] != 1.0 || terminal.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(Error::InvalidParameter("terminal values must be positive with G_0 = 1".into()));
    }
    if !(execution.is_finite() && execution >= 0.0) {
        return Err(Error::InvalidParameter("execution coefficient must be finite and >= 0".into()));
    }
    if terminal.len() == 1 {
        return Ok(WTable {
            tau_grid: tau_grid.to_vec(),
            values: vec![vec![1.0]; tau_grid.len()],
            method: WMethod::Quadrature,
        });
    }
    let problem = Rk4Problem { rates, execution, terminal, horizon, first: 1, exact_lower: &|_| vec![1.0] };
    let values = quadrature::integrate(&problem, tau_grid, step)?;
    Ok(WTable { tau_grid: tau_grid.to_vec(), values, method: WMethod::Quadrature })
}

/// First level `q*` whose node set `A_0..A_{q*}` is not pairwise distinct.
fn first_clustered_level(rates: &[f64], rel_tol: f64) -> Option<usize> {
    (1..rates.len()).find(|&q| !matches!(classify_rates(&rates[..=q], rel_tol), Classification::Distinct))
}

/// Routes to the appropriate solver; see [`WMethod`] for the recorded route.
pub fn solve(input: &SolveInput<'_>, tau_grid: &[f64], rel_tol: f64) -> Result<WTable> {
    solve_with_step(input, tau_grid, rel_tol, None)
}

pub fn solve_with_step(input: &SolveInput<'_>, tau_grid: &[f64], rel_tol: f64, step: Option<f64>) -> Result<WTable> {
    check_grid(tau_grid)?;
    let max_tau = *tau_grid.last().unwrap();
    let step = step.unwrap_or_else(|| default_step(max_tau));
    match input {
        SolveInput::TimeDependent { rates, execution, terminal, horizon } => {
            solve_quadrature(*rates, *execution, terminal, *horizon, tau_grid, step)
        }
        SolveInput::Constant(coeffs) => {
            coeffs.validate()?;
            match classify_rates(&coeffs.rates, rel_tol) {
                Classification::AllZero => solve_degenerate_with_tol(coeffs, tau_grid, rel_tol),
                Classification::Distinct => solve_nondegenerate_with_tol(coeffs, tau_grid, rel_tol),
                Classification::Clustered(_) => {
                    let q_star = first_clustered_level(&coeffs.rates, rel_tol).unwrap_or(1);
                    let rates = |_t: f64, q: usize| coeffs.rates[q];
                    if q_star <= 1 {
                        return solve_quadrature(&rates, coeffs.execution, &coeffs.terminal, max_tau, tau_grid, step);
                    }
                    let lower = CoefficientSet {
                        rates: coeffs.rates[..q_star].to_vec(),
                        execution: coeffs.execution,
                        terminal: coeffs.terminal[..q_star].to_vec(),
                    };
                    let exact = |tau: f64| closed_form_row(&lower, tau);
                    let problem = Rk4Problem {
                        rates: &rates,
                        execution: coeffs.execution,
                        terminal: &coeffs.terminal,
                        horizon: max_tau,
                        first: q_star,
                        exact_lower: &exact,
                    };
                    let values = quadrature::integrate(&problem, tau_grid, step)?;
                    Ok(WTable { tau_grid: tau_grid.to_vec(), values, method: WMethod::Hybrid })
                }
            }
        }
    }
}

/// `log w(τ, q)` for every level at one remaining time, computed entirely
/// in log space so that `A·τ` far beyond the `f64` exponent range is fine.
/// Valid for any constant rates.
pub fn log_w(coeffs: &CoefficientSet, tau: f64) -> Vec<f64> {
    let dd = exp_divided_differences::<LogPos>(&coeffs.rates, tau);
    let mut row: Vec<f64> = combine(&dd, coeffs.execution, &coeffs.terminal).into_iter().map(|l| l.0).collect();
    row[0] = 0.0;
    row
}

/// Exact `w` at one remaining time for constant rates (any regime).
pub fn w_exact(coeffs: &CoefficientSet, tau: f64) -> Vec<f64> {
    closed_form_row(coeffs, tau)
}
