//! Variance hedging of `xi = W_T`: discounted delta and the variance left
//! after hedging.

use closedloop::hedging::{hedging_objective_reduction, solve_hedging_equilibrium};
use closedloop::market::{
    build_scenario, evaluate_coefficients, simulate_brownian, simulate_state, ClaimSpec, CoefficientSpec, Control,
    Payoff, ScenarioConfig,
};
use closedloop::Process;

fn main() -> closedloop::Result<()> {
    let claim = ClaimSpec::new(Payoff::Linear);
    let scenario = build_scenario(ScenarioConfig {
        r: CoefficientSpec::constant(0.03),
        b: CoefficientSpec::constant(0.03),
        sigma: CoefficientSpec::constant(0.2),
        horizon: 1.0,
        sigma_floor: 1e-4,
        claim: Some(claim.clone()),
    })?;
    let grid = simulate_brownian(20_000, 200, 1.0, 5)?;
    let eq = solve_hedging_equilibrium(&scenario, &claim, &grid)?;
    println!(
        "phi*(0) = {:.5}, exp(-rT) / sigma = {:.5}",
        eq.operator.phi.value(0, 0),
        (-0.03_f64).exp() / 0.2
    );

    let coeffs = evaluate_coefficients(&scenario, &grid)?;
    let zero = Process::zeros(grid.n_nodes());
    let xi = eq.claim.terminal();
    let hedged = simulate_state(&coeffs, Control::Feedback(&eq.operator), 0.0, &zero, &zero, &grid)?;
    let idle = simulate_state(&coeffs, Control::Explicit(&zero), 0.0, &zero, &zero, &grid)?;
    let a = hedging_objective_reduction(&hedged, &xi, &grid, 0)?;
    let b = hedging_objective_reduction(&idle, &xi, &grid, 0)?;
    println!("Var(xi - X(T)): hedged {:.3e}, unhedged {:.3e}", a.value, b.value);
    Ok(())
}
