//! Seeded Brownian ensemble, coefficient paths and a feedback wealth
//! simulation, dumped as CSV.

use closedloop::io::write_paths_csv;
use closedloop::market::{
    build_scenario, evaluate_coefficients, simulate_brownian, simulate_state, BoundedMap, CoefficientSpec, Control,
    ScenarioConfig,
};
use closedloop::{EquilibriumOperator, Process, Provenance};

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
    let grid = simulate_brownian(1000, 100, 1.0, 42)?;
    let coeffs = evaluate_coefficients(&scenario, &grid)?;

    let op = EquilibriumOperator::new(Process::zeros(101), Process::constant(0.3, 101), Provenance::External);
    let zero = Process::zeros(101);
    let states = simulate_state(&coeffs, Control::Feedback(&op), 1.0, &zero, &zero, &grid)?;

    let x = states.terminal();
    println!("E[W_T]   = {:+.4}", grid.w_process().mean_at(100));
    println!("E[r(T)]  = {:.4}", coeffs.r.mean_at(100));
    println!("E[X(T)]  = {:.4}", x.iter().sum::<f64>() / x.len() as f64);

    let out = std::env::temp_dir().join("closedloop-brownian");
    write_paths_csv(&out.join("w.csv"), &grid.w_process(), &grid, Some(10))?;
    write_paths_csv(&out.join("wealth.csv"), &states.x, &grid, Some(10))?;
    println!("wrote {}", out.display());
    Ok(())
}
