//! Experiment runners behind the command-line tool. Each writes CSV files
//! whose bytes depend only on the config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::asymptotics::{fit_empirical_rate, theoretical_rate, GrowthReport, Regime};
use crate::config::{ExperimentConfig, PenaltyConfig};
use crate::error::{Error, Result};
use crate::model::{Criterion, ModelParams, Problem, RunningPenalty, SignalSpec, TerminalPenalty};
use crate::quotes::{frozen_signal_surface, QuoteSurface, ValueSpec};
use crate::simulate::{verify_value_function, Dominance, Estimator, ValueVerdict, VerificationReport};

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// How a surface was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceMethod {
    ClosedForm,
    /// Frozen-signal plug-in for a time-varying signal.
    FrozenHeuristic,
}

impl SurfaceMethod {
    pub fn label(self) -> &'static str {
        match self {
            SurfaceMethod::ClosedForm => "closed_form",
            SurfaceMethod::FrozenHeuristic => "frozen_heuristic",
        }
    }
}

/// Remaining-time grid covering `[0, T]` and every `T − t`.
fn tau_grid_for(times: &[f64], horizon: f64) -> Vec<f64> {
    let mut tau: Vec<f64> = times.iter().map(|t| horizon - t).collect();
    tau.push(0.0);
    tau.push(horizon);
    tau.sort_by(f64::total_cmp);
    tau.dedup();
    tau
}

/// Closed-form surface for constant signals, frozen-signal otherwise.
pub fn surface_for(problem: &Problem, times: &[f64]) -> Result<(QuoteSurface, SurfaceMethod)> {
    if problem.signal.is_constant() {
        let vs = ValueSpec::new(problem, &tau_grid_for(times, problem.params.horizon))?;
        Ok((vs.surface(times)?, SurfaceMethod::ClosedForm))
    } else {
        Ok((frozen_signal_surface(problem, times)?, SurfaceMethod::FrozenHeuristic))
    }
}

/// `quotes.csv` content: one row per (signal, q, t).
pub fn render_quotes(cfg: &ExperimentConfig) -> Result<String> {
    let times = cfg.times();
    let mut out = String::from("t,q,signal_level,unconstrained,projected,interior_flag,method\n");
    for signal in cfg.signals() {
        let (surface, method) = surface_for(&cfg.problem().with_signal(signal), &times)?;
        for q in cfg.q_levels() {
            for (i, &t) in times.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    fmt_f64(t),
                    q,
                    fmt_f64(surface.signal_levels[i]),
                    fmt_f64(surface.unconstrained_at(i, q)),
                    fmt_f64(surface.projected_at(i, q)),
                    surface.interior_at(i, q),
                    method.label()
                );
            }
        }
    }
    Ok(out)
}

/// `surface.csv` content for one signal: `t, q, delta_star` over the full grid.
pub fn render_surface(cfg: &ExperimentConfig, signal: &SignalSpec) -> Result<String> {
    let times = cfg.times();
    let (surface, method) = surface_for(&cfg.problem().with_signal(signal.clone()), &times)?;
    let mut out = String::from("t,q,delta_star,method\n");
    for (i, &t) in times.iter().enumerate() {
        for q in cfg.q_levels() {
            let _ = writeln!(out, "{},{},{},{}", fmt_f64(t), q, fmt_f64(surface.projected_at(i, q)), method.label());
        }
    }
    Ok(out)
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, content)?;
    Ok(path)
}

pub fn cmd_quote(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    write_file(out_dir, "quotes.csv", &render_quotes(cfg)?)
}

/// `surface.csv`, or `surface_<k>.csv` per ladder level.
pub fn cmd_surface(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let signals = cfg.signals();
    let mut files = Vec::with_capacity(signals.len());
    for (k, signal) in signals.iter().enumerate() {
        let name = if signals.len() == 1 { "surface.csv".to_string() } else { format!("surface_{}.csv", k + 1) };
        files.push(write_file(out_dir, &name, &render_surface(cfg, signal)?)?);
    }
    Ok(files)
}

fn estimator_label(e: Estimator) -> &'static str {
    match e {
        Estimator::Sampled => "sampled",
        Estimator::Conditional => "conditional",
    }
}

fn value_label(v: ValueVerdict) -> &'static str {
    match v {
        ValueVerdict::Pass => "pass",
        ValueVerdict::Fail => "fail",
        ValueVerdict::NotApplicable => "not_applicable",
    }
}

fn dominance_label(d: Dominance) -> &'static str {
    match d {
        Dominance::Tie => "tie",
        Dominance::Dominated => "dominated",
        Dominance::Inconclusive => "inconclusive",
        Dominance::Violated => "violated",
    }
}

pub fn run_verification(cfg: &ExperimentConfig) -> Result<VerificationReport> {
    verify_value_function(&cfg.problem(), &cfg.perturbations(), &cfg.mc_config())
}

/// `verify.csv`: the closed form, the optimal policy and each perturbation.
pub fn render_verification_csv(r: &VerificationReport) -> String {
    let mut out = String::from("policy,offset,mean,stderr,difference,combined_stderr,verdict\n");
    let _ = writeln!(out, "closed_form,0.0,{},0.0,0.0,0.0,reference", fmt_f64(r.closed_form));
    let _ = writeln!(
        out,
        "optimal,0.0,{},{},{},{},{}",
        fmt_f64(r.optimal.mean),
        fmt_f64(r.optimal.stderr),
        fmt_f64(r.optimal.mean - r.closed_form),
        fmt_f64(r.optimal.stderr),
        value_label(r.value_verdict)
    );
    for p in &r.perturbations {
        let _ = writeln!(
            out,
            "perturbed,{},{},{},{},{},{}",
            fmt_f64(p.offset),
            fmt_f64(p.estimate.mean),
            fmt_f64(p.estimate.stderr),
            fmt_f64(p.difference),
            fmt_f64(p.combined_stderr),
            dominance_label(p.verdict)
        );
    }
    out
}

pub fn render_verification_report(r: &VerificationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "criterion: {}", r.criterion);
    let _ = writeln!(out, "estimator: {}", estimator_label(r.estimator));
    let _ = writeln!(out, "seed: {}", r.seed);
    let _ = writeln!(out, "paths: {} (path i uses seed + i)", r.n_paths);
    let _ = writeln!(out, "closed_form_value: {}", fmt_f64(r.closed_form));
    let _ = writeln!(out, "mc_mean: {}", fmt_f64(r.optimal.mean));
    let _ = writeln!(out, "mc_stderr: {}", fmt_f64(r.optimal.stderr));
    let _ = writeln!(out, "z_score: {}", fmt_f64(r.z_score));
    let _ = writeln!(out, "policy_interpolation_error: {}", fmt_f64(r.interpolation_error));
    if r.constrained {
        let _ = writeln!(
            out,
            "value_check: not_applicable (constrained regime: projection is active, the closed form is not the value)"
        );
    } else {
        let _ = writeln!(out, "value_check: {} (|z| <= 3)", value_label(r.value_verdict));
    }
    for p in &r.perturbations {
        let _ = writeln!(
            out,
            "perturbation {}: difference {} combined_stderr {} -> {}",
            fmt_f64(p.offset),
            fmt_f64(p.difference),
            fmt_f64(p.combined_stderr),
            dominance_label(p.verdict)
        );
    }
    let _ = writeln!(out, "result: {}", if r.passed() { "PASS" } else { "FAIL" });
    out
}

/// Writes `verify.csv` and `verify_report.txt`.
pub fn cmd_verify(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(VerificationReport, Vec<PathBuf>)> {
    let report = run_verification(cfg)?;
    let csv = write_file(out_dir, "verify.csv", &render_verification_csv(&report))?;
    let txt = write_file(out_dir, "verify_report.txt", &render_verification_report(&report))?;
    Ok((report, vec![csv, txt]))
}

/// Horizons used when the config gives none: ten linear steps up to 1000
/// for linear growth, nine log-spaced points on `[10², 10⁴]` otherwise.
pub fn default_horizons(regime: Regime) -> Vec<f64> {
    match regime {
        Regime::Degenerate => (0..9).map(|k| 10f64.powf(2.0 + k as f64 / 4.0)).collect(),
        _ => (1..=10).map(|k| 100.0 * k as f64).collect(),
    }
}

pub fn growth_reports(cfg: &ExperimentConfig) -> Result<Vec<GrowthReport>> {
    let problem = cfg.problem();
    let coeffs = problem.coefficients()?;
    cfg.q_levels()
        .into_iter()
        .map(|q| {
            let horizons = match &cfg.asymptotics.horizons {
                Some(h) => h.clone(),
                None => default_horizons(theoretical_rate(&coeffs, problem.params.kappa, q)?.regime),
            };
            fit_empirical_rate(&problem, q, &horizons)
        })
        .collect()
}

pub fn render_growth(reports: &[GrowthReport]) -> String {
    let mut out = String::from("q,regime,theoretical_rate,fitted_rate,rel_error\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.q,
            r.regime.label(),
            fmt_f64(r.theoretical_rate),
            fmt_f64(r.fitted_rate),
            fmt_f64(r.rel_error)
        );
    }
    out
}

pub fn cmd_asymptotics(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    write_file(out_dir, "growth.csv", &render_growth(&growth_reports(cfg)?))
}

/// Every figure family known to [`cmd_reproduce`].
pub const FIGURE_FAMILIES: [&str; 11] = [
    "caseI-q1",
    "caseI-q2",
    "caseI-decay",
    "caseI-delayed-decay",
    "caseII-q1",
    "caseII-q2",
    "caseIII-q1",
    "caseIV-q1",
    "caseIV-q2-sigma",
    "caseIV-q2-T",
    "caseIII-heatmaps",
];

/// Signal ladder of the line plots, `{−3..3}×10⁻⁴`.
pub const SIGNAL_LADDER: [f64; 7] = [-3e-4, -2e-4, -1e-4, 0.0, 1e-4, 2e-4, 3e-4];
/// Inventory range of the heatmaps.
pub const HEATMAP_Q0: u32 = 10;
/// Rate of the decaying signals.
pub const SIGNAL_DECAY_RATE: f64 = 0.01;
/// Peak of the delayed-decay signal.
pub const SIGNAL_DELAY: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelKind {
    /// Line plot of `δ(t, Q0)` over the signal ladder.
    Quotes,
    /// Heatmap over `(t, q)`.
    Surface,
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub name: String,
    pub kind: PanelKind,
    pub config: ExperimentConfig,
}

#[allow(clippy::too_many_arguments)]
fn line_panel(
    family: &str,
    label: &str,
    criterion: Criterion,
    q0: u32,
    params: impl FnOnce(&mut ModelParams),
    signal: SignalSpec,
    alpha: f64,
    beta: f64,
) -> Panel {
    let mut p = ModelParams::baseline(q0);
    params(&mut p);
    let running = if beta > 0.0 { RunningPenalty::Quadratic { beta } } else { RunningPenalty::None };
    let penalties = PenaltyConfig { terminal: TerminalPenalty::Linear { alpha }, running };
    let mut config = ExperimentConfig::new(criterion, p, signal, penalties);
    config.grid.q = Some(vec![q0]);
    config.grid.signal_ladder = Some(SIGNAL_LADDER.to_vec());
    Panel { name: format!("{family}_{label}"), kind: PanelKind::Quotes, config }
}

/// Panels of one figure family with the reference calibration.
pub fn figure_panels(family: &str) -> Result<Vec<Panel>> {
    use Criterion::*;
    let constant = SignalSpec::constant(0.0);
    let decay = SignalSpec::ExpDecay { g: 0.0, rate: SIGNAL_DECAY_RATE };
    let delayed = SignalSpec::DelayedDecay { g: 0.0, rate: SIGNAL_DECAY_RATE, center: SIGNAL_DELAY };
    let keep = |_: &mut ModelParams| {};
    let panels = match family {
        "caseI-q1" | "caseI-q2" => {
            let q0 = if family == "caseI-q1" { 1 } else { 2 };
            [0.001, 0.005]
                .iter()
                .map(|&alpha| {
                    line_panel(family, &format!("alpha{alpha}"), CaseI, q0, keep, constant.clone(), alpha, 0.0)
                })
                .collect()
        }
        "caseI-decay" | "caseI-delayed-decay" => {
            let signal = if family == "caseI-decay" { decay } else { delayed };
            [1, 2]
                .iter()
                .map(|&q0| line_panel(family, &format!("q{q0}"), CaseI, q0, keep, signal.clone(), 0.001, 0.0))
                .collect()
        }
        "caseII-q1" | "caseII-q2" => {
            let q0 = if family == "caseII-q1" { 1 } else { 2 };
            [0.0005, 0.001]
                .iter()
                .map(|&beta| {
                    line_panel(family, &format!("beta{beta}"), CaseII, q0, keep, constant.clone(), 0.001, beta)
                })
                .collect()
        }
        "caseIII-q1" => [0.01, 0.05]
            .iter()
            .map(|&gamma| {
                let set = |p: &mut ModelParams| {
                    p.sigma = 0.1;
                    p.gamma = gamma;
                };
                line_panel(family, &format!("gamma{gamma}"), CaseIII, 1, set, constant.clone(), 0.001, 0.0)
            })
            .collect(),
        "caseIV-q1" => [0.0005, 0.001]
            .iter()
            .map(|&beta| {
                let set = |p: &mut ModelParams| {
                    p.sigma = 0.1;
                    p.gamma = 0.01;
                };
                line_panel(family, &format!("beta{beta}"), CaseIV, 1, set, constant.clone(), 0.001, beta)
            })
            .collect(),
        "caseIV-q2-sigma" => [0.1, 0.01]
            .iter()
            .map(|&sigma| {
                let set = |p: &mut ModelParams| {
                    p.sigma = sigma;
                    p.gamma = 0.05;
                };
                line_panel(family, &format!("sigma{sigma}"), CaseIV, 2, set, constant.clone(), 0.001, 0.0001)
            })
            .collect(),
        "caseIV-q2-T" => [10.0, 2.0]
            .iter()
            .map(|&horizon| {
                let set = |p: &mut ModelParams| {
                    p.sigma = 0.1;
                    p.gamma = 0.05;
                    p.horizon = horizon;
                };
                line_panel(family, &format!("T{horizon}"), CaseIV, 2, set, constant.clone(), 0.001, 0.0001)
            })
            .collect(),
        "caseIII-heatmaps" => [-2e-4, 0.0, 2e-4, 5e-4]
            .iter()
            .map(|&g| {
                let mut p = ModelParams::baseline(HEATMAP_Q0);
                p.sigma = 0.01;
                p.gamma = 0.01;
                let penalties =
                    PenaltyConfig { terminal: TerminalPenalty::Linear { alpha: 0.001 }, running: RunningPenalty::None };
                let config = ExperimentConfig::new(CaseIII, p, SignalSpec::constant(g), penalties);
                Panel { name: format!("{family}_g{g}"), kind: PanelKind::Surface, config }
            })
            .collect(),
        other => return Err(Error::UnknownFigure(other.to_string())),
    };
    Ok(panels)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes one CSV and one TOML config per panel plus `manifest.csv` with
/// content hashes. `figure` is a family name or `all`.
pub fn cmd_reproduce(figure: &str, out_dir: &Path, t_points: Option<usize>) -> Result<Vec<PathBuf>> {
    let families: Vec<&str> = if figure == "all" { FIGURE_FAMILIES.to_vec() } else { vec![figure] };
    let mut panels = Vec::new();
    for family in families {
        panels.extend(figure_panels(family)?);
    }
    let mut manifest = String::from("file,sha256,config_file,config_sha256,method\n");
    let mut files = Vec::new();
    for mut panel in panels {
        if t_points.is_some() {
            panel.config.grid.t_points = t_points;
        }
        panel.config.validate()?;
        let config_text = panel.config.to_toml_string()?;
        let content = match panel.kind {
            PanelKind::Quotes => render_quotes(&panel.config)?,
            PanelKind::Surface => render_surface(&panel.config, &panel.config.signal)?,
        };
        let method =
            if panel.config.signal.is_constant() { SurfaceMethod::ClosedForm } else { SurfaceMethod::FrozenHeuristic };
        let csv_name = format!("{}.csv", panel.name);
        let toml_name = format!("{}.toml", panel.name);
        files.push(write_file(out_dir, &csv_name, &content)?);
        files.push(write_file(out_dir, &toml_name, &config_text)?);
        let _ = writeln!(
            manifest,
            "{csv_name},{},{toml_name},{},{}",
            sha256_hex(content.as_bytes()),
            sha256_hex(config_text.as_bytes()),
            method.label()
        );
    }
    files.push(write_file(out_dir, "manifest.csv", &manifest)?);
    Ok(files)
}
