#![allow(dead_code)]

use std::path::PathBuf;

use closedloop::config::ExperimentConfig;
use closedloop::market::{build_scenario, CoefficientSpec, MarketScenario, ScenarioConfig};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
}

pub fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&scenario_path(name)).unwrap()
}

pub fn constants(r: f64, b: f64, sigma: f64) -> MarketScenario {
    build_scenario(ScenarioConfig {
        r: CoefficientSpec::constant(r),
        b: CoefficientSpec::constant(b),
        sigma: CoefficientSpec::constant(sigma),
        horizon: 1.0,
        sigma_floor: 1e-4,
        claim: None,
    })
    .unwrap()
}

pub fn with_coefficients(r: CoefficientSpec, b: CoefficientSpec, sigma: CoefficientSpec) -> MarketScenario {
    build_scenario(ScenarioConfig {
        r,
        b,
        sigma,
        horizon: 1.0,
        sigma_floor: 1e-4,
        claim: None,
    })
    .unwrap()
}
