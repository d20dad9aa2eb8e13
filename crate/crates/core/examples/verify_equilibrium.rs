//! Spike-perturbation test of the equilibrium property, and the same test
//! against a deliberately mis-scaled operator.

use closedloop::market::{build_scenario, evaluate_coefficients, simulate_brownian, CoefficientSpec, ScenarioConfig};
use closedloop::mean_variance::solve_mv_equilibrium;
use closedloop::verify::{power_check, verify_operator, Objective, Probe, VerificationReport, EPSILON_LADDER};

fn main() -> closedloop::Result<()> {
    let scenario = build_scenario(ScenarioConfig {
        r: CoefficientSpec::constant(0.03),
        b: CoefficientSpec::constant(0.08),
        sigma: CoefficientSpec::constant(0.2),
        horizon: 1.0,
        sigma_floor: 1e-4,
        claim: None,
    })?;
    let grid = simulate_brownian(50_000, 100, 1.0, 8)?;
    let coeffs = evaluate_coefficients(&scenario, &grid)?;
    let mv = solve_mv_equilibrium(&scenario, 0.5, &grid)?;
    let probes = Probe::default_set(&grid);
    let objective = Objective::MeanVariance { gamma: 0.5 };

    let reports = verify_operator(&coeffs, &mv.operator, objective, 1.0, &probes, &EPSILON_LADDER, &grid)?;
    let report = VerificationReport { reports };
    println!("{report}");
    println!("passed: {}", report.passed());

    let power = power_check(&coeffs, &mv.operator, objective, 1.0, &probes, &EPSILON_LADDER, &grid, 2.0)?;
    println!("phi x 2: min z {:.2}, rejected: {}", power.min_z, power.rejected());
    Ok(())
}
