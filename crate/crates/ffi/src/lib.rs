//! C interface to `execquote`.
//!
//! A problem is loaded from TOML text into an opaque handle, which is then
//! queried for quotes, values and coefficients, or simulated. Every call
//! returns an [`ExqStatus`]; on failure the message is available from
//! [`exq_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use execquote::config::ExperimentConfig;
use execquote::quotes::{maturity_refined_grid, ValueSpec};
use execquote::simulate::{estimate_objective, FeedbackPolicy, McConfig, POLICY_GRID_INTERVALS};
use execquote::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidParameter = 4,
    NoInventory = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque problem handle.
pub struct ExqProblem {
    config: ExperimentConfig,
    value: ValueSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).expect("interior nuls were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn status_of(err: &Error) -> ExqStatus {
    match err {
        Error::Config(_) | Error::UnknownFigure(_) | Error::Io(_) => ExqStatus::Config,
        Error::NoInventory => ExqStatus::NoInventory,
        Error::InvalidParameter(_) | Error::UnsupportedSignal | Error::MissingThinningBound | Error::TooFewPaths(_) => {
            ExqStatus::InvalidParameter
        }
        Error::DegenerateCoefficients { .. }
        | Error::NotDegenerate
        | Error::NumericalBlowup { .. }
        | Error::PolicyBelowFloor { .. }
        | Error::ExtremePayoff { .. } => ExqStatus::Numerical,
    }
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), (ExqStatus, String)>) -> ExqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ExqStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            ExqStatus::Panic
        }
    }
}

fn lib(err: Error) -> (ExqStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(name: &str) -> (ExqStatus, String) {
    (ExqStatus::NullPointer, format!("{name} is null"))
}

fn build(text: &str) -> Result<ExqProblem, Error> {
    let config = ExperimentConfig::from_toml_str(text)?;
    let problem = config.problem();
    let grid = maturity_refined_grid(problem.params.horizon, POLICY_GRID_INTERVALS);
    let value = if problem.signal.is_constant() {
        ValueSpec::new(&problem, &grid)?
    } else {
        ValueSpec::time_dependent(&problem, &grid, None)?
    };
    Ok(ExqProblem { config, value })
}

/// Parses a TOML experiment config and solves its value table.
///
/// # Safety
/// `toml` must be a valid NUL-terminated string and `out` a valid pointer.
/// The handle written to `*out` must be released with [`exq_problem_free`].
#[no_mangle]
pub unsafe extern "C" fn exq_problem_from_toml(toml: *const c_char, out: *mut *mut ExqProblem) -> ExqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if toml.is_null() {
            return Err(null("toml"));
        }
        let text = CStr::from_ptr(toml).to_str().map_err(|e| (ExqStatus::InvalidUtf8, e.to_string()))?;
        let handle = build(text).map_err(lib)?;
        *out = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `problem` must come from [`exq_problem_from_toml`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn exq_problem_free(problem: *mut ExqProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Initial inventory `Q0` of the problem.
///
/// # Safety
/// `problem` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn exq_problem_q0(problem: *const ExqProblem, out: *mut u32) -> ExqStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = p.config.params.q0;
        Ok(())
    })
}

/// Optimal ask at `(t, q)` before and after projection.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn exq_quote(
    problem: *const ExqProblem,
    t: f64,
    q: u32,
    unconstrained: *mut f64,
    projected: *mut f64,
) -> ExqStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let unc = unconstrained.as_mut().ok_or_else(|| null("unconstrained"))?;
        let proj = projected.as_mut().ok_or_else(|| null("projected"))?;
        let quote = p.value.quote(t, q).map_err(lib)?;
        *unc = quote.unconstrained;
        *proj = quote.projected;
        Ok(())
    })
}

/// Value function at `(t, x, M, q)`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn exq_value(
    problem: *const ExqProblem,
    t: f64,
    x: f64,
    m: f64,
    q: u32,
    out: *mut f64,
) -> ExqStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = p.value.value(t, x, m, q).map_err(lib)?;
        Ok(())
    })
}

/// Reduced coefficients `A_0..A_{Q0}`, `C`, `G_0..G_{Q0}` of a constant-signal
/// problem. `rates` and `terminal` must each hold `len ≥ Q0 + 1` values.
///
/// # Safety
/// `rates` and `terminal` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn exq_coefficients(
    problem: *const ExqProblem,
    rates: *mut f64,
    terminal: *mut f64,
    len: usize,
    execution: *mut f64,
) -> ExqStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        if rates.is_null() || terminal.is_null() {
            return Err(null("rates/terminal"));
        }
        let execution = execution.as_mut().ok_or_else(|| null("execution"))?;
        let coeffs = p.config.problem().coefficients().map_err(lib)?;
        let n = coeffs.rates.len();
        if len < n {
            return Err((ExqStatus::BufferTooSmall, format!("need {n} entries, got {len}")));
        }
        std::slice::from_raw_parts_mut(rates, n).copy_from_slice(&coeffs.rates);
        std::slice::from_raw_parts_mut(terminal, n).copy_from_slice(&coeffs.terminal);
        *execution = coeffs.execution;
        Ok(())
    })
}

/// Monte Carlo estimate of the objective under the optimal feedback shifted
/// by `offset`, with the config's estimator.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn exq_estimate(
    problem: *const ExqProblem,
    offset: f64,
    n_paths: usize,
    seed: u64,
    mean: *mut f64,
    std_error: *mut f64,
) -> ExqStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let mean = mean.as_mut().ok_or_else(|| null("mean"))?;
        let std_error = std_error.as_mut().ok_or_else(|| null("std_error"))?;
        let policy = FeedbackPolicy::new(&p.value, offset).map_err(lib)?;
        let mc = McConfig { n_paths, seed, ..p.config.mc_config() };
        let est = estimate_objective(&p.config.problem(), &policy, &mc).map_err(lib)?;
        *mean = est.mean;
        *std_error = est.stderr;
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn exq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}
