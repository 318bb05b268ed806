//! Divided differences of `x ↦ e^{τx}`.
//!
//! For nodes `x_0..x_n` and the upper bidiagonal matrix `B` with diagonal
//! `x_i` and unit superdiagonal, entry `(r, q)` of `exp(τB)` equals the
//! divided difference `f[x_r, …, x_q]` of `f(x) = e^{τx}`. Shifting by
//! `μ = min x_i` makes `τ(B − μI)` entrywise nonnegative, so the Taylor
//! series, the repeated squaring and the final weighted sum over `r` add
//! only nonnegative terms. There is no cancellation, and coincident nodes
//! give the confluent limit with no special casing.
//!
//! The same recurrence runs in linear arithmetic or in log space
//! ([`LogPos`]) for horizons where `e^{A τ}` leaves the `f64` range.

/// Nonnegative numbers under `+` and `×`.
pub(crate) trait Positive: Copy {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_linear(x: f64) -> Self;
    fn from_log(l: f64) -> Self;
    fn add(self, other: Self) -> Self;
    fn mul(self, other: Self) -> Self;
}

impl Positive for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_linear(x: f64) -> Self {
        x
    }
    fn from_log(l: f64) -> Self {
        l.exp()
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn mul(self, other: Self) -> Self {
        self * other
    }
}

/// A nonnegative number stored as its natural log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LogPos(pub f64);

impl Positive for LogPos {
    fn zero() -> Self {
        LogPos(f64::NEG_INFINITY)
    }
    fn one() -> Self {
        LogPos(0.0)
    }
    fn from_linear(x: f64) -> Self {
        LogPos(x.ln())
    }
    fn from_log(l: f64) -> Self {
        LogPos(l)
    }
    fn add(self, other: Self) -> Self {
        let (hi, lo) = if self.0 >= other.0 { (self.0, other.0) } else { (other.0, self.0) };
        if lo == f64::NEG_INFINITY {
            return LogPos(hi);
        }
        LogPos(hi + (lo - hi).exp().ln_1p())
    }
    fn mul(self, other: Self) -> Self {
        LogPos(self.0 + other.0)
    }
}

/// Dense upper-triangular matrix, row-major `n × n`.
#[derive(Debug, Clone)]
pub(crate) struct UpperTri<S> {
    n: usize,
    data: Vec<S>,
}

impl<S: Positive> UpperTri<S> {
    fn identity(n: usize) -> Self {
        let mut data = vec![S::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = S::one();
        }
        Self { n, data }
    }

    pub(crate) fn get(&self, r: usize, q: usize) -> S {
        self.data[r * self.n + q]
    }

    fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut data = vec![S::zero(); n * n];
        for i in 0..n {
            for j in i..n {
                let mut acc = S::zero();
                for k in i..=j {
                    acc = acc.add(self.data[i * n + k].mul(other.data[k * n + j]));
                }
                data[i * n + j] = acc;
            }
        }
        Self { n, data }
    }

    fn scaled(mut self, s: S) -> Self {
        for v in &mut self.data {
            *v = v.mul(s);
        }
        self
    }

    fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = a.add(*b);
        }
    }
}

/// Target norm of the scaled matrix before the Taylor step.
const TAYLOR_NORM: f64 = 0.5;
/// Extra Taylor terms past the highest superdiagonal; `0.5^16/16!` is far
/// below one ulp.
const TAYLOR_EXTRA_TERMS: usize = 16;

/// All divided differences `f[x_r..x_q]` of `e^{τx}` over `nodes`.
pub(crate) fn exp_divided_differences<S: Positive>(nodes: &[f64], tau: f64) -> UpperTri<S> {
    let n = nodes.len();
    if tau == 0.0 || n == 0 {
        // exp(0) = I exactly; divided differences of a constant beyond order 0 vanish
        return UpperTri::identity(n);
    }
    let shift = nodes.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = nodes.iter().map(|x| x - shift).fold(0.0_f64, f64::max);
    let norm = tau * (spread + if n > 1 { 1.0 } else { 0.0 });
    let squarings = if norm > TAYLOR_NORM { (norm / TAYLOR_NORM).log2().ceil() as i32 } else { 0 };
    let h = tau / 2f64.powi(squarings);

    let mut step = UpperTri { n, data: vec![S::zero(); n * n] };
    for (i, node) in nodes.iter().enumerate() {
        step.data[i * n + i] = S::from_linear(h * (node - shift));
        if i + 1 < n {
            step.data[i * n + i + 1] = S::from_linear(h);
        }
    }

    let mut sum = UpperTri::identity(n);
    let mut term = UpperTri::identity(n);
    for m in 1..(n + TAYLOR_EXTRA_TERMS) {
        term = term.matmul(&step).scaled(S::from_linear(1.0 / m as f64));
        sum.accumulate(&term);
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum);
    }
    sum.scaled(S::from_log(tau * shift))
}

/// `w_q = Σ_r C^{q−r} G_r Φ_{r,q}` for every level, from a divided-difference matrix.
pub(crate) fn combine<S: Positive>(dd: &UpperTri<S>, execution: f64, terminal: &[f64]) -> Vec<S> {
    let n = terminal.len();
    let c_pow: Vec<S> = (0..n).map(|k| S::from_linear(execution.powi(k as i32))).collect();
    let g: Vec<S> = terminal.iter().map(|&v| S::from_linear(v)).collect();
    (0..n)
        .map(|q| {
            let mut acc = S::zero();
            for r in 0..=q {
                acc = acc.add(c_pow[q - r].mul(g[r]).mul(dd.get(r, q)));
            }
            acc
        })
        .collect()
}
