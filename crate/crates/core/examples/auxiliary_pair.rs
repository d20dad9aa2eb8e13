//! The auxiliary pair behind the first-order term: its diagonal identity
//! and a replay of its backward recursion.

use closedloop::bsde::general_equilibrium;
use closedloop::market::{
    build_scenario, evaluate_coefficients, simulate_brownian, simulate_state, BoundedMap, CoefficientSpec, Control,
    ScenarioConfig,
};
use closedloop::verify::{build_auxiliary_pair, diagonal_identity_check, recursion_residuals};
use closedloop::Process;

fn main() -> closedloop::Result<()> {
    let scenario = build_scenario(ScenarioConfig {
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
    })?;
    let grid = simulate_brownian(20_000, 40, 1.0, 2)?;
    let coeffs = evaluate_coefficients(&scenario, &grid)?;
    let zero = Process::zeros(grid.n_nodes());
    let (solution, op) = general_equilibrium(&scenario, 0.5, &zero, &zero, &grid)?;
    let states = simulate_state(&coeffs, Control::Feedback(&op), 1.0, &zero, &zero, &grid)?;
    let pair = build_auxiliary_pair(&solution, &op, &coeffs, &states, &zero, 10, &grid)?;

    let d = diagonal_identity_check(&pair, &coeffs)?;
    println!("sup |beta Y' + sigma Z'| = {:.2e} (step {}, path {})", d.sup, d.step, d.path);

    let steps = recursion_residuals(&pair, &solution, &op, &coeffs, &states, &grid)?;
    let worst = steps.iter().map(|s| s.z_score().abs()).fold(0.0, f64::max);
    println!("recursion replay: {} steps, max |z| = {worst:.2}", steps.len());
    Ok(())
}
