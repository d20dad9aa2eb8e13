//! Regression estimate of the first backward pair against the
//! measure-change oracle, for a short rate driven by the Brownian state.

use closedloop::bsde::{mn_oracle_measure_change, solve_mn};
use closedloop::market::{build_scenario, evaluate_coefficients, simulate_brownian, BoundedMap, CoefficientSpec, ScenarioConfig};
use closedloop::regression::{fit_with_se, Basis};

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
    let grid = simulate_brownian(40_000, 100, 1.0, 3)?;
    let coeffs = evaluate_coefficients(&scenario, &grid)?;
    let mn = solve_mn(&coeffs, &grid)?;

    println!("{:>5} {:>7} {:>10} {:>10} {:>9}", "t", "w", "regression", "oracle", "oracle se");
    for k in [0, 50] {
        let t = grid.time(k);
        let m = mn.y.node(k).to_vec(grid.n_paths());
        let fit = fit_with_se(Basis::at_time(t), grid.w_at(k), &m).expect("regular design");
        let cells = if k == 0 { vec![0.0] } else { vec![-t.sqrt(), 0.0, t.sqrt()] };
        for w in cells {
            let o = mn_oracle_measure_change(&scenario, 100, k, w, 100_000, 11)?;
            println!("{t:>5.2} {w:>+7.3} {:>10.5} {:>10.5} {:>9.1e}", fit.evaluate(w), o.mean, o.se);
        }
    }
    Ok(())
}
