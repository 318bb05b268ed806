//! Long-horizon growth of the optimal quote.
//!
//! With `Ā_q = max_{i≤q} A_i`, the quote at inventory `q` grows like
//! `(Ā_q − Ā_{q−1})/κ · (T − t)` when the rates are distinct, and like
//! `(1/κ) log(T − t)` when every rate vanishes. In terms of `Ψ` the linear
//! rate is `(1/b)(max_{i≤q} Ψ(i) − max_{i<q} Ψ(i))`: the quote grows only at
//! levels that set a new record of the effective continuation value.

use crate::error::{Error, Result};
use crate::model::{classify_rates, Classification, CoefficientSet, Problem, DEFAULT_REL_TOL};
use crate::triangular;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Distinct rates; linear growth in the horizon.
    NonDegenerate,
    /// All rates zero; logarithmic growth in the horizon.
    Degenerate,
    /// Rates that are close but not identical. The limit formulas hold
    /// formally but convergence can be arbitrarily slow.
    OutOfTheory,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::NonDegenerate => "non_degenerate",
            Regime::Degenerate => "degenerate",
            Regime::OutOfTheory => "out_of_theory",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoreticalRate {
    pub regime: Regime,
    /// Per unit time for the linear regimes; coefficient of `log T` for the
    /// degenerate one.
    pub rate: f64,
}

/// `Ā_q = max_{0≤i≤q} A_i`.
pub fn running_max(rates: &[f64], q: usize) -> f64 {
    rates[..=q].iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Limit of `δ^unc(t,q)/(T−t)`, or of `δ^unc(t,q)/log(T−t)` when degenerate.
pub fn theoretical_rate(coeffs: &CoefficientSet, kappa: f64, q: u32) -> Result<TheoreticalRate> {
    let q = q as usize;
    if q == 0 {
        return Err(Error::NoInventory);
    }
    if q > coeffs.max_q() {
        return Err(Error::InvalidParameter(format!("inventory {q} exceeds Q0 = {}", coeffs.max_q())));
    }
    let linear = (running_max(&coeffs.rates, q) - running_max(&coeffs.rates, q - 1)) / kappa;
    Ok(match classify_rates(&coeffs.rates[..=q], DEFAULT_REL_TOL) {
        Classification::AllZero => TheoreticalRate { regime: Regime::Degenerate, rate: 1.0 / kappa },
        Classification::Distinct => TheoreticalRate { regime: Regime::NonDegenerate, rate: linear },
        Classification::Clustered(_) => TheoreticalRate { regime: Regime::OutOfTheory, rate: linear },
    })
}

/// Record-value form `(1/b)(max_{i≤q} Ψ(i) − max_{i≤q−1} Ψ(i))`, with `Ψ(0) = 0`.
pub fn record_value_rate(psi: &[f64], b: f64, q: usize) -> f64 {
    (running_max(psi, q) - running_max(psi, q - 1)) / b
}

/// Unconstrained quote `δ^unc(0, q)` for horizon `T`, formed from `log w`
/// so that `A·T` far beyond the `f64` exponent range is harmless.
pub fn long_horizon_quote(problem: &Problem, coeffs: &CoefficientSet, horizon: f64, q: u32) -> f64 {
    let lw = triangular::log_w(coeffs, horizon);
    let ratio = lw[q as usize] - lw[q as usize - 1];
    let p = &problem.params;
    let constant = if problem.criterion.is_cara() { p.cara_constant() } else { p.risk_neutral_constant() };
    constant + p.a / p.b + ratio / p.kappa
}

/// Theoretical against fitted growth of `δ^unc(0, q)` over a horizon set.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub regime: Regime,
    pub q: u32,
    pub theoretical_rate: f64,
    pub fitted_rate: f64,
    pub horizons: Vec<f64>,
    pub quotes: Vec<f64>,
    pub rel_error: f64,
    /// `max − min` of the quotes over the horizons.
    pub variation: f64,
}

/// Smallest number of horizons accepted by [`fit_empirical_rate`].
pub const MIN_HORIZONS: usize = 3;

/// Least-squares slope of `δ^unc(0, q)` against `T` (or `log T` in the
/// degenerate regime), compared with [`theoretical_rate`].
///
/// The horizons should be long compared with `1/min gap` of the rates;
/// closer to zero the transient terms bias the slope.
pub fn fit_empirical_rate(problem: &Problem, q: u32, horizons: &[f64]) -> Result<GrowthReport> {
    problem.validate()?;
    let coeffs = problem.coefficients()?;
    if horizons.len() < MIN_HORIZONS {
        return Err(Error::InvalidParameter(format!("need at least {MIN_HORIZONS} horizons, got {}", horizons.len())));
    }
    if horizons.iter().any(|h| !(h.is_finite() && *h > 0.0)) || horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("horizons must be positive and strictly ascending".into()));
    }
    let theory = theoretical_rate(&coeffs, problem.params.kappa, q)?;
    let quotes: Vec<f64> = horizons.iter().map(|&h| long_horizon_quote(problem, &coeffs, h, q)).collect();
    let xs: Vec<f64> = match theory.regime {
        Regime::Degenerate => horizons.iter().map(|h| h.ln()).collect(),
        _ => horizons.to_vec(),
    };
    let fitted = ls_slope(&xs, &quotes);
    let span = xs[xs.len() - 1] - xs[0];
    // slopes below this are indistinguishable from a quote bounded to 1e-6
    let floor = 1e-6 / span;
    let rel_error = (fitted - theory.rate).abs() / theory.rate.abs().max(floor);
    let (lo, hi) = quotes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(GrowthReport {
        regime: theory.regime,
        q,
        theoretical_rate: theory.rate,
        fitted_rate: fitted,
        horizons: horizons.to_vec(),
        quotes,
        rel_error,
        variation: hi - lo,
    })
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
