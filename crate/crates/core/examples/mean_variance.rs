//! Mean-variance equilibrium: the closed form for a constant market, and a
//! random short rate where the strategy depends on wealth.

use closedloop::market::{build_scenario, simulate_brownian, BoundedMap, CoefficientSpec, ScenarioConfig};
use closedloop::mean_variance::{mv_closed_form_deterministic, solve_mv_equilibrium};

fn scenario(r: CoefficientSpec) -> closedloop::Result<closedloop::market::MarketScenario> {
    build_scenario(ScenarioConfig {
        r,
        b: CoefficientSpec::constant(0.08),
        sigma: CoefficientSpec::constant(0.2),
        horizon: 1.0,
        sigma_floor: 1e-4,
        claim: None,
    })
}

fn main() -> closedloop::Result<()> {
    let gamma = 0.5;
    let grid = simulate_brownian(20_000, 200, 1.0, 1)?;

    let constant = scenario(CoefficientSpec::constant(0.03))?;
    let mv = solve_mv_equilibrium(&constant, gamma, &grid)?;
    let exact = mv_closed_form_deterministic(&constant, gamma, grid.times())?;
    println!(
        "constant market: phi*(0) = {:.6}, closed form {:.6}, sup |Theta*| = {:.1e}",
        mv.operator.phi.value(0, 0),
        exact.phi.value(0, 0),
        mv.operator.theta.sup_abs()
    );

    let random = scenario(CoefficientSpec::brownian(
        BoundedMap::Tanh {
            level: 0.02,
            amplitude: 0.02,
            rate: 1.0,
        },
        0.04,
    ))?;
    let mv = solve_mv_equilibrium(&random, gamma, &grid)?;
    let (theta0, phi0) = (mv.operator.theta.value(0, 0), mv.operator.phi.value(0, 0));
    println!("random rate: Theta*(0) = {theta0:.5}, phi*(0) = {phi0:.5}");
    for x in [1.0, 2.0] {
        println!("  u*(0) at wealth {x}: {:.5}", theta0 * x + phi0);
    }
    println!("  sup |sL3| = {:.3e}", mv.lambda3_sup());
    Ok(())
}
