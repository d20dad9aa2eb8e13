//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::market::{build_scenario, ClaimSpec, MarketScenario, PerturbationAmount, ScenarioConfig};
use crate::verify::EPSILON_LADDER;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    MeanVariance,
    Hedging,
    General,
    OpenLoopCompare,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub paths: usize,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
}

/// One perturbation amount, `v = value` or `v = scale * clamp(W_t, -cap, cap)`.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum AmountConfig {
    Constant(f64),
    Brownian { scale: f64, cap: f64 },
}

impl AmountConfig {
    pub fn amount(self) -> PerturbationAmount {
        match self {
            AmountConfig::Constant(c) => PerturbationAmount::Constant(c),
            AmountConfig::Brownian { scale, cap } => PerturbationAmount::ClampedBrownian { scale, cap },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Perturbation start times, as fractions of the horizon.
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_amounts")]
    pub amounts: Vec<AmountConfig>,
    /// Durations, as fractions of the horizon.
    #[serde(default = "default_ladder")]
    pub ladder: Vec<f64>,
    /// Scale applied to `phi` for the power check; `0` disables it.
    #[serde(default = "default_power")]
    pub power_factor: f64,
}

fn default_times() -> Vec<f64> {
    vec![0.0, 0.25, 0.5]
}

fn default_amounts() -> Vec<AmountConfig> {
    [0.1, -0.1, 1.0, -1.0, 5.0, -5.0].map(AmountConfig::Constant).to_vec()
}

fn default_ladder() -> Vec<f64> {
    EPSILON_LADDER.to_vec()
}

fn default_power() -> f64 {
    2.0
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            times: default_times(),
            amounts: default_amounts(),
            ladder: default_ladder(),
            power_factor: default_power(),
        }
    }
}

/// Optional pass/fail thresholds beyond the ones that always apply.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    /// Expected `phi*(0)`, judged to `phi0_rel_tol`.
    pub expected_phi0: Option<f64>,
    pub phi0_rel_tol: Option<f64>,
    /// Required ratio of unhedged to hedged terminal variance.
    pub min_variance_reduction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ProblemKind,
    pub scenario: ScenarioConfig,
    pub grid: GridConfig,
    pub gamma: Option<f64>,
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default)]
    pub probes: ProbeConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Per-path CSV dumps are cut to this many paths.
    #[serde(default = "default_dump_paths")]
    pub dump_paths: usize,
}

fn default_x0() -> f64 {
    1.0
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_dump_paths() -> usize {
    100
}

/// Command-line overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(p) = o.paths {
            self.grid.paths = p;
        }
        if let Some(s) = o.steps {
            self.grid.steps = s;
        }
        if let Some(s) = o.seed {
            self.grid.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        self.validate()
    }

    /// `gamma`, required for every kind except hedging.
    pub fn gamma(&self) -> Result<f64> {
        self.gamma
            .ok_or_else(|| Error::Config(format!("missing field `gamma` (required for {:?})", self.kind)))
    }

    pub fn claim(&self) -> Result<&ClaimSpec> {
        self.scenario
            .claim
            .as_ref()
            .ok_or_else(|| Error::Config("missing field `scenario.claim` (required for hedging)".into()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.paths < 2 || self.grid.steps < 1 {
            return Err(Error::Config(format!(
                "grid needs at least 2 paths and 1 step, got {} and {}",
                self.grid.paths, self.grid.steps
            )));
        }
        match self.kind {
            ProblemKind::Hedging => {
                self.claim()?;
            }
            _ => {
                let g = self.gamma()?;
                if !g.is_finite() {
                    return Err(Error::Config("`gamma` must be finite".into()));
                }
            }
        }
        let p = &self.probes;
        if p.times.iter().any(|t| !(0.0..1.0).contains(t)) {
            return Err(Error::Config("`probes.times` must lie in [0, 1)".into()));
        }
        if p.ladder.is_empty() || p.ladder.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err(Error::Config("`probes.ladder` must hold fractions in (0, 1]".into()));
        }
        if !self.x0.is_finite() {
            return Err(Error::Config("`x0` must be finite".into()));
        }
        Ok(())
    }

    pub fn build_scenario(&self) -> Result<MarketScenario> {
        build_scenario(self.scenario.clone()).map_err(|e| Error::Config(format!("scenario: {e}")))
    }
}
