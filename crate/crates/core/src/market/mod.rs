//! Market scenarios, Brownian ensembles and forward wealth dynamics.

mod brownian;
mod scenario;
mod state;

pub use brownian::{simulate_brownian, BrownianGrid};
pub use scenario::{
    build_scenario, BoundedMap, ClaimSpec, CoefficientSpec, MarketScenario, Payoff, ScenarioConfig,
};
pub use state::{
    forward_transition, simulate_perturbed_pair, simulate_state, terminal_values, Control,
    PerturbationAmount, PerturbationSpec, StatePaths,
};

use crate::error::{Error, Result};
use crate::process::Process;

/// Node values of `r`, `b` and `sigma` on a Brownian grid.
#[derive(Clone, Debug)]
pub struct CoefficientPaths {
    pub r: Process,
    pub b: Process,
    pub sigma: Process,
    sigma_floor: f64,
}

impl CoefficientPaths {
    /// Builds coefficient paths directly, checking the volatility floor.
    pub fn new(r: Process, b: Process, sigma: Process, sigma_floor: f64) -> Result<Self> {
        check_floor(&sigma, sigma_floor)?;
        Ok(CoefficientPaths {
            r,
            b,
            sigma,
            sigma_floor,
        })
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    /// `b - r`
    pub fn beta(&self) -> Process {
        Process::combine([&self.b, &self.r], |[b, r]| b - r).expect("aligned coefficients")
    }

    /// `(b - r) / sigma`
    pub fn theta(&self) -> Process {
        Process::combine([&self.b, &self.r, &self.sigma], |[b, r, s]| (b - r) / s)
            .expect("aligned coefficients")
    }

    pub fn is_deterministic(&self) -> bool {
        self.r.is_deterministic() && self.b.is_deterministic() && self.sigma.is_deterministic()
    }

    pub fn n_nodes(&self) -> usize {
        self.r.n_nodes()
    }
}

fn check_floor(sigma: &Process, floor: f64) -> Result<()> {
    for k in 0..sigma.n_nodes() {
        match sigma.node(k) {
            crate::process::Node::Scalar(s) => {
                if s * s < floor {
                    return Err(Error::FloorViolation {
                        value: s * s,
                        floor,
                        location: format!("step {k}"),
                    });
                }
            }
            crate::process::Node::Paths(values) => {
                if let Some((p, s)) = values.iter().enumerate().find(|(_, s)| *s * *s < floor) {
                    return Err(Error::FloorViolation {
                        value: s * s,
                        floor,
                        location: format!("step {k}, path {p}"),
                    });
                }
            }
        }
    }
    Ok(())
}

fn evaluate_spec(spec: &CoefficientSpec, horizon: f64, grid: &BrownianGrid) -> Process {
    if spec.is_deterministic() {
        Process::Deterministic(grid.times().iter().map(|t| spec.eval(*t, horizon, 0.0)).collect())
    } else {
        let n = grid.n_paths();
        let mut values = Vec::with_capacity(n * grid.n_nodes());
        for k in 0..grid.n_nodes() {
            let t = grid.time(k);
            values.extend(grid.w_at(k).iter().map(|w| spec.eval(t, horizon, *w)));
        }
        Process::Stochastic { n_paths: n, values }
    }
}

/// Evaluates `r`, `b` and `sigma` at every node of the grid. Node-`k`
/// values depend only on `(t_k, W(t_k))`.
pub fn evaluate_coefficients(scenario: &MarketScenario, grid: &BrownianGrid) -> Result<CoefficientPaths> {
    if (scenario.horizon() - grid.horizon()).abs() > 1e-12 * scenario.horizon() {
        return Err(Error::GridMismatch(format!(
            "scenario horizon {} vs grid horizon {}",
            scenario.horizon(),
            grid.horizon()
        )));
    }
    let c = scenario.config();
    let horizon = scenario.horizon();
    CoefficientPaths::new(
        evaluate_spec(&c.r, horizon, grid),
        evaluate_spec(&c.b, horizon, grid),
        evaluate_spec(&c.sigma, horizon, grid),
        scenario.sigma_floor(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tanh_rate() -> MarketScenario {
        build_scenario(ScenarioConfig {
            r: CoefficientSpec::brownian(
                BoundedMap::Tanh {
                    level: 0.02,
                    amplitude: 0.02,
                    rate: 1.0,
                },
                0.04,
            ),
            b: CoefficientSpec::constant(0.08),
            sigma: CoefficientSpec::constant(0.2),
            horizon: 1.0,
            sigma_floor: 1e-4,
            claim: None,
        })
        .unwrap()
    }

    #[test]
    fn constant_specs_give_constant_arrays() {
        let s = build_scenario(ScenarioConfig {
            r: CoefficientSpec::constant(0.03),
            b: CoefficientSpec::constant(0.05 + 0.03),
            sigma: CoefficientSpec::constant(0.2),
            horizon: 1.0,
            sigma_floor: 1e-4,
            claim: None,
        })
        .unwrap();
        let g = simulate_brownian(5, 4, 1.0, 1).unwrap();
        let c = evaluate_coefficients(&s, &g).unwrap();
        assert!(c.is_deterministic());
        assert_eq!(c.r, Process::constant(0.03, 5));
        let theta = c.theta();
        for k in 0..5 {
            assert!((theta.value(0, k) - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn tanh_rate_at_origin_equals_level() {
        let g = simulate_brownian(5, 4, 1.0, 1).unwrap();
        let c = evaluate_coefficients(&tanh_rate(), &g).unwrap();
        for p in 0..5 {
            assert_eq!(c.r.value(p, 0), 0.02);
        }
    }

    #[test]
    fn coefficients_are_adapted() {
        // Changing increments after step k must not change node-k values.
        let s = tanh_rate();
        let g = simulate_brownian(20, 10, 1.0, 5).unwrap();
        let g2 = g.resample_from(6, 99);
        let c1 = evaluate_coefficients(&s, &g).unwrap();
        let c2 = evaluate_coefficients(&s, &g2).unwrap();
        for k in 0..=6 {
            for p in 0..20 {
                assert_eq!(c1.r.value(p, k), c2.r.value(p, k));
            }
        }
        assert_ne!(c1.r.value(0, 7), c2.r.value(0, 7));
    }

    #[test]
    fn realized_floor_violation_is_reported() {
        let r = Process::constant(0.0, 3);
        let sigma = Process::Deterministic(vec![0.2, 0.001, 0.2]);
        assert!(matches!(
            CoefficientPaths::new(r.clone(), r, sigma, 1e-4),
            Err(Error::FloorViolation { .. })
        ));
    }
}
