use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bounded scalar map applied to the Brownian state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum BoundedMap {
    /// `level + amplitude * tanh(rate * w)`
    Tanh { level: f64, amplitude: f64, rate: f64 },
    /// `level + amplitude * sin(frequency * w)`
    Sine {
        level: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// `level + slope * clamp(w, -cap, cap)`
    ClampedLinear { level: f64, slope: f64, cap: f64 },
}

impl BoundedMap {
    #[inline]
    pub fn apply(&self, w: f64) -> f64 {
        match *self {
            BoundedMap::Tanh {
                level,
                amplitude,
                rate,
            } => level + amplitude * (rate * w).tanh(),
            BoundedMap::Sine {
                level,
                amplitude,
                frequency,
            } => level + amplitude * (frequency * w).sin(),
            BoundedMap::ClampedLinear { level, slope, cap } => level + slope * w.clamp(-cap, cap),
        }
    }
}

/// How one market coefficient depends on time and the Brownian state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientSpec {
    Constant {
        value: f64,
    },
    /// Equally spaced samples over `[0, T]`, linearly interpolated.
    TimeFunction {
        samples: Vec<f64>,
    },
    /// A bounded map of `W_t`, clamped to `[-bound, bound]`.
    Brownian {
        map: BoundedMap,
        bound: Option<f64>,
    },
}

impl CoefficientSpec {
    pub fn constant(value: f64) -> Self {
        CoefficientSpec::Constant { value }
    }

    pub fn brownian(map: BoundedMap, bound: f64) -> Self {
        CoefficientSpec::Brownian {
            map,
            bound: Some(bound),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, CoefficientSpec::Brownian { .. })
    }

    /// Value at time `t` (within a horizon `horizon`) and Brownian state `w`.
    pub fn eval(&self, t: f64, horizon: f64, w: f64) -> f64 {
        match self {
            CoefficientSpec::Constant { value } => *value,
            CoefficientSpec::TimeFunction { samples } => interpolate(samples, t, horizon),
            CoefficientSpec::Brownian { map, bound } => {
                let b = bound.unwrap_or(f64::INFINITY);
                map.apply(w).clamp(-b, b)
            }
        }
    }

    /// `int_a^b value(s) ds` for deterministic specs.
    pub fn integral(&self, a: f64, b: f64, horizon: f64) -> Option<f64> {
        match self {
            CoefficientSpec::Constant { value } => Some(value * (b - a)),
            CoefficientSpec::TimeFunction { samples } => Some(integrate_linear(samples, a, b, horizon)),
            CoefficientSpec::Brownian { .. } => None,
        }
    }

    fn declared_bound(&self) -> Option<f64> {
        match self {
            CoefficientSpec::Constant { value } => Some(value.abs()),
            CoefficientSpec::TimeFunction { samples } => {
                Some(samples.iter().fold(0.0_f64, |a, v| a.max(v.abs())))
            }
            CoefficientSpec::Brownian { bound, .. } => *bound,
        }
    }

    /// Values the spec can take, sampled densely enough to check floors.
    fn probe_values(&self, horizon: f64) -> Vec<f64> {
        match self {
            CoefficientSpec::Constant { value } => vec![*value],
            CoefficientSpec::TimeFunction { samples } => {
                let n = samples.len().max(2) * 8;
                (0..=n)
                    .map(|i| self.eval(horizon * i as f64 / n as f64, horizon, 0.0))
                    .collect()
            }
            CoefficientSpec::Brownian { .. } => (0..=4000)
                .map(|i| self.eval(0.0, horizon, -20.0 + 40.0 * i as f64 / 4000.0))
                .chain([self.eval(0.0, horizon, -1e6), self.eval(0.0, horizon, 1e6)])
                .collect(),
        }
    }
}

fn interpolate(samples: &[f64], t: f64, horizon: f64) -> f64 {
    match samples.len() {
        0 => f64::NAN,
        1 => samples[0],
        n => {
            let x = (t / horizon).clamp(0.0, 1.0) * (n - 1) as f64;
            let i = (x.floor() as usize).min(n - 2);
            let frac = x - i as f64;
            samples[i] + frac * (samples[i + 1] - samples[i])
        }
    }
}

/// Exact integral of the piecewise-linear interpolant.
fn integrate_linear(samples: &[f64], a: f64, b: f64, horizon: f64) -> f64 {
    if samples.len() < 2 {
        return samples.first().copied().unwrap_or(f64::NAN) * (b - a);
    }
    let n = samples.len() - 1;
    let h = horizon / n as f64;
    let mut knots = vec![a];
    for i in 1..n {
        let t = i as f64 * h;
        if t > a && t < b {
            knots.push(t);
        }
    }
    knots.push(b);
    knots
        .windows(2)
        .map(|s| 0.5 * (s[1] - s[0]) * (interpolate(samples, s[0], horizon) + interpolate(samples, s[1], horizon)))
        .sum()
}

/// Kind of contingent claim `xi = g(W_T)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payoff {
    Constant { value: f64 },
    /// `xi = W_T`
    Linear,
    /// `xi = clamp(map(W_T), -bound, bound)`
    Bounded { map: BoundedMap, bound: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimSpec {
    #[serde(flatten)]
    pub payoff: Payoff,
    /// Declared moment order `k > 2` with `E|xi|^k < inf`.
    #[serde(default = "default_moment_order")]
    pub moment_order: f64,
}

fn default_moment_order() -> f64 {
    4.0
}

impl ClaimSpec {
    pub fn new(payoff: Payoff) -> Self {
        ClaimSpec {
            payoff,
            moment_order: default_moment_order(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.moment_order > 2.0) {
            return Err(Error::InvalidArgument(format!(
                "claim moment order must exceed 2, got {}",
                self.moment_order
            )));
        }
        if let Payoff::Bounded { bound, .. } = self.payoff {
            if !(bound > 0.0 && bound.is_finite()) {
                return Err(Error::InvalidArgument("claim bound must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn payoff_at(&self, w_terminal: f64) -> f64 {
        match &self.payoff {
            Payoff::Constant { value } => *value,
            Payoff::Linear => w_terminal,
            Payoff::Bounded { map, bound } => map.apply(w_terminal).clamp(-bound, *bound),
        }
    }
}

/// Scenario description as it appears in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub r: CoefficientSpec,
    pub b: CoefficientSpec,
    pub sigma: CoefficientSpec,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_floor")]
    pub sigma_floor: f64,
    #[serde(default)]
    pub claim: Option<ClaimSpec>,
}

fn default_horizon() -> f64 {
    1.0
}

fn default_floor() -> f64 {
    1e-4
}

/// A validated market: bounded coefficients with `sigma^2 >= delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketScenario {
    config: ScenarioConfig,
}

/// Validates a scenario description.
pub fn build_scenario(config: ScenarioConfig) -> Result<MarketScenario> {
    if !(config.horizon > 0.0 && config.horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {}",
            config.horizon
        )));
    }
    if !(config.sigma_floor > 0.0) {
        return Err(Error::InvalidArgument("sigma_floor must be positive".into()));
    }
    for (name, spec) in [("r", &config.r), ("b", &config.b), ("sigma", &config.sigma)] {
        match spec {
            CoefficientSpec::Brownian { bound: None, .. } => {
                return Err(Error::UnboundedCoefficient(name.into()))
            }
            CoefficientSpec::Brownian { bound: Some(b), .. } if !(*b > 0.0 && b.is_finite()) => {
                return Err(Error::InvalidArgument(format!("bound of `{name}` must be positive")))
            }
            CoefficientSpec::TimeFunction { samples } if samples.is_empty() => {
                return Err(Error::InvalidArgument(format!("`{name}` has no samples")))
            }
            _ => {}
        }
        if spec.declared_bound().is_some_and(|b| !b.is_finite()) {
            return Err(Error::UnboundedCoefficient(name.into()));
        }
    }
    let probes = config.sigma.probe_values(config.horizon);
    if let Some(worst) = probes.iter().map(|s| s * s).reduce(f64::min) {
        if worst < config.sigma_floor {
            return Err(Error::FloorViolation {
                value: worst,
                floor: config.sigma_floor,
                location: "probe grid".into(),
            });
        }
    }
    if let CoefficientSpec::TimeFunction { samples } = &config.sigma {
        if samples.windows(2).any(|w| w[0] * w[1] <= 0.0) {
            return Err(Error::FloorViolation {
                value: 0.0,
                floor: config.sigma_floor,
                location: "sign change in sigma samples".into(),
            });
        }
    }
    if let Some(claim) = &config.claim {
        claim.validate()?;
    }
    Ok(MarketScenario { config })
}

impl MarketScenario {
    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn horizon(&self) -> f64 {
        self.config.horizon
    }

    pub fn sigma_floor(&self) -> f64 {
        self.config.sigma_floor
    }

    pub fn claim(&self) -> Option<&ClaimSpec> {
        self.config.claim.as_ref()
    }

    pub fn r(&self, t: f64, w: f64) -> f64 {
        self.config.r.eval(t, self.config.horizon, w)
    }

    pub fn b(&self, t: f64, w: f64) -> f64 {
        self.config.b.eval(t, self.config.horizon, w)
    }

    pub fn sigma(&self, t: f64, w: f64) -> f64 {
        self.config.sigma.eval(t, self.config.horizon, w)
    }

    /// Excess return `b - r`.
    pub fn beta(&self, t: f64, w: f64) -> f64 {
        self.b(t, w) - self.r(t, w)
    }

    /// Market price of risk `(b - r) / sigma`.
    pub fn theta(&self, t: f64, w: f64) -> f64 {
        self.beta(t, w) / self.sigma(t, w)
    }

    pub fn rate_is_deterministic(&self) -> bool {
        self.config.r.is_deterministic()
    }

    pub fn is_deterministic(&self) -> bool {
        self.config.r.is_deterministic()
            && self.config.b.is_deterministic()
            && self.config.sigma.is_deterministic()
    }
}
