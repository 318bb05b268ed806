//! TOML experiment configuration.
//!
//! ```toml
//! format_version = 1
//! criterion = "CaseI"
//!
//! [params]
//! lambda = 0.8333333333333334
//! kappa = 1000.0
//! a = 0.0
//! b = 1.0
//! horizon = 30.0
//! q0 = 2
//! m0 = 100.0
//!
//! [signal]
//! kind = "constant"
//! g = 0.0
//!
//! [penalties.terminal]
//! kind = "linear"
//! alpha = 0.001
//!
//! [grid]
//! t_points = 601
//! signal_ladder = [-3e-4, 0.0, 3e-4]
//!
//! [mc]
//! n_paths = 100000
//! seed = 42
//! perturbations = [0.0, 0.002, -0.002]
//! ```
//!
//! Unknown keys are rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Criterion, ModelParams, PenaltySpec, Problem, RunningPenalty, SignalSpec, TerminalPenalty};
use crate::quotes::uniform_grid;
use crate::simulate::{Estimator, McConfig};

pub const FORMAT_VERSION: u32 = 1;
/// Time points on `[0, T]` when the grid is not given.
pub const DEFAULT_T_POINTS: usize = 601;
pub const DEFAULT_PATHS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub criterion: Criterion,
    pub params: ModelParams,
    #[serde(default = "zero_signal")]
    pub signal: SignalSpec,
    #[serde(default)]
    pub penalties: PenaltyConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub asymptotics: AsymptoticsSection,
}

fn zero_signal() -> SignalSpec {
    SignalSpec::constant(0.0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    #[serde(default)]
    pub terminal: TerminalPenalty,
    #[serde(default)]
    pub running: RunningPenalty,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Number of equally spaced times on `[0, T]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_points: Option<usize>,
    /// Explicit ascending times; overrides `t_points`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Inventory levels to report; all of `1..=Q0` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<u32>>,
    /// Signal base levels; each replaces `g` of the configured signal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_ladder: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Quote offsets; `[0, 2/κ, −2/κ]` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbations: Option<Vec<f64>>,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thinning_floor: Option<f64>,
}

fn default_paths() -> usize {
    DEFAULT_PATHS
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            n_paths: DEFAULT_PATHS,
            seed: 0,
            perturbations: None,
            estimator: Estimator::default(),
            thinning_floor: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsSection {
    /// Horizons for the growth fit; chosen per regime when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizons: Option<Vec<f64>>,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    /// A config with defaults for everything but the model.
    pub fn new(criterion: Criterion, params: ModelParams, signal: SignalSpec, penalties: PenaltyConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            criterion,
            params,
            signal,
            penalties,
            grid: GridConfig::default(),
            mc: McSection::default(),
            asymptotics: AsymptoticsSection::default(),
        }
    }

    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => config_error(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_error(e.to_string()))
    }

    pub fn penalties(&self) -> PenaltySpec {
        PenaltySpec::from_builtins(&self.penalties.terminal, &self.penalties.running, self.params.q0)
    }

    pub fn problem(&self) -> Problem {
        Problem::new(self.params.clone(), self.signal.clone(), self.penalties(), self.criterion)
    }

    /// Ascending report times.
    pub fn times(&self) -> Vec<f64> {
        match (&self.grid.times, self.grid.t_points) {
            (Some(times), _) => times.clone(),
            (None, n) => uniform_grid(self.params.horizon, n.unwrap_or(DEFAULT_T_POINTS) - 1),
        }
    }

    pub fn q_levels(&self) -> Vec<u32> {
        self.grid.q.clone().unwrap_or_else(|| (1..=self.params.q0).collect())
    }

    /// Signal variants to sweep: the ladder if present, else the signal itself.
    pub fn signals(&self) -> Vec<SignalSpec> {
        match &self.grid.signal_ladder {
            Some(levels) => levels.iter().map(|&g| self.signal.with_level(g)).collect(),
            None => vec![self.signal.clone()],
        }
    }

    pub fn perturbations(&self) -> Vec<f64> {
        self.mc.perturbations.clone().unwrap_or_else(|| {
            let step = 2.0 / self.params.kappa;
            vec![0.0, step, -step]
        })
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig {
            n_paths: self.mc.n_paths,
            seed: self.mc.seed,
            estimator: self.mc.estimator,
            thinning_floor: self.mc.thinning_floor,
            start_inventory: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(config_error(format!(
                "format_version: expected {FORMAT_VERSION}, got {}",
                self.format_version
            )));
        }
        let keyed = |key: &str, e: Error| match e {
            Error::InvalidParameter(msg) => config_error(format!("{key}: {msg}")),
            other => other,
        };
        self.params.validate_for(self.criterion).map_err(|e| keyed("params", e))?;
        self.penalties().validate(self.params.q0).map_err(|e| keyed("penalties", e))?;
        if let Some(n) = self.grid.t_points {
            if n < 2 {
                return Err(config_error("grid.t_points: need at least 2"));
            }
        }
        let horizon = self.params.horizon;
        if let Some(times) = &self.grid.times {
            if times.is_empty() {
                return Err(config_error("grid.times: empty"));
            }
            if times.iter().any(|t| !(0.0..=horizon).contains(t)) {
                return Err(config_error(format!("grid.times: every time must lie in [0, {horizon}]")));
            }
            if times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(config_error("grid.times: must be strictly ascending"));
            }
        }
        if let Some(qs) = &self.grid.q {
            if qs.is_empty() || qs.iter().any(|&q| q == 0 || q > self.params.q0) {
                return Err(config_error(format!("grid.q: levels must lie in 1..={}", self.params.q0)));
            }
        }
        if let Some(levels) = &self.grid.signal_ladder {
            if levels.is_empty() || levels.iter().any(|g| !g.is_finite()) {
                return Err(config_error("grid.signal_ladder: need finite levels"));
            }
        }
        for signal in self.signals() {
            signal.validate_on_grid(&self.times()).map_err(|e| keyed("signal", e))?;
        }
        if self.mc.n_paths < 2 {
            return Err(config_error("mc.n_paths: need at least 2"));
        }
        if let Some(p) = &self.mc.perturbations {
            if p.iter().any(|e| !e.is_finite()) {
                return Err(config_error("mc.perturbations: must be finite"));
            }
        }
        if let Some(f) = self.mc.thinning_floor {
            if !f.is_finite() {
                return Err(config_error("mc.thinning_floor: must be finite"));
            }
        }
        if let Some(h) = &self.asymptotics.horizons {
            if h.len() < crate::asymptotics::MIN_HORIZONS
                || h.iter().any(|x| !(x.is_finite() && *x > 0.0))
                || h.windows(2).any(|w| w[1] <= w[0])
            {
                return Err(config_error(format!(
                    "asymptotics.horizons: need at least {} positive ascending values",
                    crate::asymptotics::MIN_HORIZONS
                )));
            }
        }
        Ok(())
    }
}
