//! The general problem with inhomogeneous terms `l` and `h`: operator,
//! constructive identities and the claimed transition process.

use closedloop::bsde::{build_riccati_core, general_equilibrium, solve_mn};
use closedloop::market::{
    build_scenario, evaluate_coefficients, forward_transition, simulate_brownian, BoundedMap, CoefficientSpec,
    ScenarioConfig,
};

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
        sigma: CoefficientSpec::constant(0.2),
        horizon: 1.0,
        sigma_floor: 1e-4,
        claim: None,
    })?;
    let grid = simulate_brownian(20_000, 100, 1.0, 9)?;
    let l = grid.w_process().map(|w| 0.01 * w.sin());
    let h = grid.w_process().map(|w| 0.02 * w.tanh());
    let (solution, op) = general_equilibrium(&scenario, 0.8, &l, &h, &grid)?;

    println!("Theta*(0) = {:.5}, phi*(0) = {:.5}", op.theta.value(0, 0), op.phi.value(0, 0));
    for (name, v) in solution.identity_residuals()? {
        println!("sup |{name}| = {v:.2e}");
    }

    let coeffs = evaluate_coefficients(&scenario, &grid)?;
    let core = build_riccati_core(&solve_mn(&coeffs, &grid)?, &coeffs)?;
    let fwd = forward_transition(&coeffs, &core.theta, &grid)?;
    let claim = core.transition_claim();
    println!("E[transition(T)] = {:.5}, E[P2(0) / P2(T)] = {:.5}", fwd.mean_at(100), claim.mean_at(100));
    Ok(())
}
