//! Classical RK4 on `dv_q/dτ = A_q(T−τ) v_q + C v_{q−1}`.
//!
//! Levels below `first` are supplied exactly by a forcing closure; levels
//! `first..` are integrated jointly. The system is lower bidiagonal, so the
//! joint stages for level `q` only read levels `≤ q` and this is the same
//! computation as integrating one level at a time.

use crate::error::{Error, Result};

pub(crate) struct Rk4Problem<'a> {
    pub rates: &'a dyn Fn(f64, usize) -> f64,
    pub execution: f64,
    pub terminal: &'a [f64],
    pub horizon: f64,
    /// First integrated level (`≥ 1`).
    pub first: usize,
    /// Exact values of levels `0..first` at a remaining time `τ`.
    pub exact_lower: &'a dyn Fn(f64) -> Vec<f64>,
}

/// Default RK4 step: `min(1e-2, T/2000)`.
pub fn default_step(max_tau: f64) -> f64 {
    if max_tau > 0.0 {
        (max_tau / 2000.0).min(1e-2)
    } else {
        1e-2
    }
}

pub(crate) fn integrate(problem: &Rk4Problem<'_>, tau_grid: &[f64], step: f64) -> Result<Vec<Vec<f64>>> {
    let n = problem.terminal.len();
    let first = problem.first;
    debug_assert!(first >= 1 && first <= n);

    let mut out = Vec::with_capacity(tau_grid.len());
    let mut tau = 0.0;
    // integrated levels only
    let mut state: Vec<f64> = problem.terminal[first..].to_vec();
    let forcing = |tau: f64| (problem.exact_lower)(tau)[first - 1];

    let mut k1 = vec![0.0; state.len()];
    let mut k2 = vec![0.0; state.len()];
    let mut k3 = vec![0.0; state.len()];
    let mut k4 = vec![0.0; state.len()];
    let mut tmp = vec![0.0; state.len()];

    for &target in tau_grid {
        let span = target - tau;
        if span > 0.0 {
            let substeps = (span / step).ceil().max(1.0) as usize;
            let h = span / substeps as f64;
            for _ in 0..substeps {
                let f_lo = forcing(tau);
                let f_mid = forcing(tau + 0.5 * h);
                let f_hi = forcing(tau + h);
                derivative(problem, tau, f_lo, &state, &mut k1);
                for i in 0..state.len() {
                    tmp[i] = state[i] + 0.5 * h * k1[i];
                }
                derivative(problem, tau + 0.5 * h, f_mid, &tmp, &mut k2);
                for i in 0..state.len() {
                    tmp[i] = state[i] + 0.5 * h * k2[i];
                }
                derivative(problem, tau + 0.5 * h, f_mid, &tmp, &mut k3);
                for i in 0..state.len() {
                    tmp[i] = state[i] + h * k3[i];
                }
                derivative(problem, tau + h, f_hi, &tmp, &mut k4);
                for i in 0..state.len() {
                    state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                tau += h;
                if let Some(i) = state.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NumericalBlowup { tau, q: first + i });
                }
            }
            tau = target;
        }
        let mut row = (problem.exact_lower)(target);
        row.truncate(first);
        row.extend_from_slice(&state);
        out.push(row);
    }
    Ok(out)
}

fn derivative(problem: &Rk4Problem<'_>, tau: f64, forcing: f64, state: &[f64], out: &mut [f64]) {
    let t = problem.horizon - tau;
    for i in 0..state.len() {
        let q = problem.first + i;
        let lower = if i == 0 { forcing } else { state[i - 1] };
        out[i] = (problem.rates)(t, q) * state[i] + problem.execution * lower;
    }
}
