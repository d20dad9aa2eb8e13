//! Closed-loop and open-loop operators side by side.

use closedloop::market::{build_scenario, evaluate_coefficients, simulate_brownian, BoundedMap, CoefficientSpec, ScenarioConfig};
use closedloop::mean_variance::solve_mv_equilibrium;
use closedloop::open_loop::{compare_operators, solve_openloop_with, FirstPairMethod};

fn main() -> closedloop::Result<()> {
    let scenario = build_scenario(ScenarioConfig {
        r: CoefficientSpec::constant(0.03),
        b: CoefficientSpec::brownian(
            BoundedMap::Tanh {
                level: 0.08,
                amplitude: 0.02,
                rate: 1.0,
            },
            0.1,
        ),
        sigma: CoefficientSpec::brownian(
            BoundedMap::Sine {
                level: 0.2,
                amplitude: 0.04,
                frequency: 1.0,
            },
            0.25,
        ),
        horizon: 1.0,
        sigma_floor: 1e-4,
        claim: None,
    })?;
    let grid = simulate_brownian(20_000, 100, 1.0, 4)?;
    let coeffs = evaluate_coefficients(&scenario, &grid)?;
    let closed = solve_mv_equilibrium(&scenario, 0.5, &grid)?;
    for method in [FirstPairMethod::Substitution, FirstPairMethod::DirectQuadratic] {
        let open = solve_openloop_with(&coeffs, 0.5, &grid, method)?;
        println!("{method:?}:\n{}", compare_operators(&closed.operator, &open.operator, true)?);
    }
    Ok(())
}
