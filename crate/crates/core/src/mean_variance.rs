//! Closed-loop equilibrium for dynamic mean-variance selection.
//!
//! The first equation of the system is the same quadratic BSDE as the `P2`
//! equation of the general problem, so `sP1 = -sqrt(2) / M` and
//! `sL1 = sqrt(2) N / M^2` with `(M, N)` from [`solve_mn`].

use std::f64::consts::SQRT_2;

use crate::bsde::{solve_linear_bsde, solve_mn, BsdePair, LinearBsdeSpec, RiccatiSolution, Terminal};
use crate::error::{Error, Result};
use crate::market::{evaluate_coefficients, BrownianGrid, CoefficientPaths, MarketScenario, StatePaths};
use crate::operator::{EquilibriumOperator, Provenance};
use crate::process::{Node, Process};

#[derive(Clone, Debug)]
pub struct MvEquilibrium {
    pub mn: BsdePair,
    pub sp1: BsdePair,
    pub sp2: BsdePair,
    pub sp3: BsdePair,
    pub operator: EquilibriumOperator,
    pub gamma: f64,
}

impl MvEquilibrium {
    /// `sup |sL3|`, the part of `phi*` driven by randomness in `beta` and
    /// `sigma`.
    pub fn lambda3_sup(&self) -> f64 {
        self.sp3.z.sup_abs()
    }

    /// The same solution written in the variables of the general problem.
    pub fn as_riccati(&self) -> Result<RiccatiSolution> {
        let (p, l) = (&self.sp1.y, &self.sp1.z);
        let pair = |y: Process, z: Process| BsdePair {
            y,
            z,
            residual_rms: Vec::new(),
        };
        let p1 = pair(p.map(|p| 2.0 * p * p), Process::combine([p, l], |[p, l]| 4.0 * p * l)?);
        let p4 = pair(
            Process::combine([&self.sp2.y, p, &self.sp3.y], |[a, p, c]| a + 2.0 * p * c)?,
            Process::combine([&self.sp2.z, l, &self.sp3.y, &self.sp3.z, p], |[g, l, c, l3, p]| {
                g + 2.0 * l * c + 2.0 * l3 * p
            })?,
        );
        Ok(RiccatiSolution {
            mn: self.mn.clone(),
            p1,
            p2: self.sp1.clone(),
            p3: self.sp3.clone(),
            p4,
            phi_psi: self.sp2.clone(),
            gamma: self.gamma,
        })
    }

    pub fn components(&self) -> Vec<(&'static str, &Process)> {
        vec![
            ("sP1", &self.sp1.y),
            ("sL1", &self.sp1.z),
            ("sP2", &self.sp2.y),
            ("sL2", &self.sp2.z),
            ("sP3", &self.sp3.y),
            ("sL3", &self.sp3.z),
        ]
    }
}

/// `(sP1, sL1)` from the `(M, N)` solve.
pub(crate) fn first_pair(mn: &BsdePair) -> Result<BsdePair> {
    for k in 0..mn.y.n_nodes() {
        let hi = match mn.y.node(k) {
            Node::Scalar(v) => v,
            Node::Paths(vs) => vs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        if !(hi < 0.0) {
            return Err(Error::DegenerateM { step: k, path: 0, value: hi });
        }
    }
    let y = mn.y.map(|m| -SQRT_2 / m);
    let z = Process::combine([&mn.y, &mn.z], |[m, n]| SQRT_2 * n / (m * m))?;
    let floor = SQRT_2 / mn.y.sup_abs();
    for k in 0..y.n_nodes() {
        let lo = match y.node(k) {
            Node::Scalar(v) => v,
            Node::Paths(vs) => vs.iter().copied().fold(f64::INFINITY, f64::min),
        };
        if lo < floor * (1.0 - 1e-12) {
            return Err(Error::DegenerateP1 { step: k, value: lo });
        }
    }
    Ok(BsdePair {
        y,
        z,
        residual_rms: mn.residual_rms.clone(),
    })
}

pub fn solve_mv_equilibrium(scenario: &MarketScenario, gamma: f64, grid: &BrownianGrid) -> Result<MvEquilibrium> {
    let coeffs = evaluate_coefficients(scenario, grid)?;
    let mn = solve_mn(&coeffs, grid)?;
    solve_mv_equilibrium_from(&coeffs, mn, gamma, grid)
}

/// As [`solve_mv_equilibrium`], reusing an `(M, N)` solve.
pub fn solve_mv_equilibrium_from(
    coeffs: &CoefficientPaths,
    mn: BsdePair,
    gamma: f64,
    grid: &BrownianGrid,
) -> Result<MvEquilibrium> {
    let sp1 = first_pair(&mn)?;
    let beta = coeffs.beta();
    let sigma = &coeffs.sigma;
    // Division guard for sigma^2 sP1^2.
    let delta_p = SQRT_2 / mn.y.sup_abs();
    let guard = coeffs.sigma_floor() * delta_p * delta_p;
    let ratio = Process::combine([&sp1.z, &sp1.y], |[l, p]| l / p)?;
    let sp2 = solve_linear_bsde(
        &LinearBsdeSpec::new(
            Process::combine([&coeffs.r, &beta, &ratio, sigma], |[r, b, q, s]| r - b * q / s)?,
            ratio.map(|q| -q),
            Process::zeros(grid.n_nodes()),
            Terminal::Scalar(-gamma),
        ),
        grid,
    )?;
    // sP1 beta + sL1 sigma
    let tilt = Process::combine([&sp1.y, &beta, &sp1.z, sigma], |[p, b, l, s]| p * b + l * s)?;
    let sp3 = solve_linear_bsde(
        &LinearBsdeSpec::new(
            Process::zeros(grid.n_nodes()),
            Process::combine([&tilt, sigma, &sp1.y], |[m, s, p]| -m / (s * p))?,
            Process::combine([&tilt, &beta, &sp2.y, sigma, &sp2.z, &sp1.y], |[m, b, p2, s, l2, p]| {
                -m * (b * p2 + s * l2) / (2.0 * (s * s * p * p).max(guard))
            })?,
            Terminal::Scalar(0.0),
        ),
        grid,
    )?;
    let theta = Process::combine([&sp1.z, sigma, &sp1.y], |[l, s, p]| -l / (s * p))?;
    let phi = Process::combine(
        [&sp1.y, &sp3.z, sigma, &beta, &sp2.y, &sp2.z],
        |[p, l3, s, b, p2, l2]| -(2.0 * p * l3 * s + b * p2 + s * l2) / (2.0 * (s * s * p * p).max(guard)),
    )?;
    let operator = EquilibriumOperator::new(theta, phi, Provenance::MeanVariance);
    Ok(MvEquilibrium {
        mn,
        sp1,
        sp2,
        sp3,
        operator,
        gamma,
    })
}

/// `Theta* = 0`, `phi*(t) = gamma beta(t) / (2 sigma(t)^2) exp(-int_t^T r)`
/// on the given nodes.
pub fn mv_closed_form_deterministic(scenario: &MarketScenario, gamma: f64, times: &[f64]) -> Result<EquilibriumOperator> {
    let c = scenario.config();
    for (name, spec) in [("r", &c.r), ("b", &c.b), ("sigma", &c.sigma)] {
        if !spec.is_deterministic() {
            return Err(Error::NotDeterministic(name.into()));
        }
    }
    let horizon = scenario.horizon();
    let phi = times
        .iter()
        .map(|&t| {
            let discount = (-c.r.integral(t, horizon, horizon).expect("deterministic rate")).exp();
            let sigma = scenario.sigma(t, 0.0);
            gamma * scenario.beta(t, 0.0) / (2.0 * sigma * sigma) * discount
        })
        .collect();
    Ok(EquilibriumOperator::new(
        Process::zeros(times.len()),
        Process::Deterministic(phi),
        Provenance::ClosedForm,
    ))
}

/// `u* = Theta* X* + phi*` along the given wealth paths.
pub fn equilibrium_strategy(operator: &EquilibriumOperator, states: &StatePaths) -> Result<Process> {
    Process::combine([&operator.theta, &states.x, &operator.phi], |[t, x, f]| t * x + f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{build_scenario, simulate_brownian, CoefficientSpec, ScenarioConfig};

    fn constants() -> MarketScenario {
        build_scenario(ScenarioConfig {
            r: CoefficientSpec::constant(0.03),
            b: CoefficientSpec::constant(0.08),
            sigma: CoefficientSpec::constant(0.2),
            horizon: 1.0,
            sigma_floor: 1e-4,
            claim: None,
        })
        .unwrap()
    }

    #[test]
    fn closed_form_values() {
        let s = constants();
        let op = mv_closed_form_deterministic(&s, 0.5, &[0.0, 1.0]).unwrap();
        assert!((op.phi.value(0, 0) - 0.303264).abs() < 5e-7);
        assert!((op.phi.value(0, 1) - 0.3125).abs() < 1e-15);
        let zero = mv_closed_form_deterministic(&s, 0.0, &[0.0, 0.5]).unwrap();
        assert_eq!(zero.phi.sup_abs(), 0.0);
    }

    #[test]
    fn closed_form_rejects_random_specs() {
        let mut cfg = constants().config().clone();
        cfg.r = CoefficientSpec::brownian(
            crate::market::BoundedMap::Tanh {
                level: 0.02,
                amplitude: 0.02,
                rate: 1.0,
            },
            0.04,
        );
        let s = build_scenario(cfg).unwrap();
        assert!(matches!(
            mv_closed_form_deterministic(&s, 0.5, &[0.0]),
            Err(Error::NotDeterministic(_))
        ));
    }

    #[test]
    fn numerical_solve_matches_closed_form_for_constants() {
        let g = simulate_brownian(10, 200, 1.0, 3).unwrap();
        let mv = solve_mv_equilibrium(&constants(), 0.5, &g).unwrap();
        assert!(mv.operator.theta.sup_abs() < 1e-14);
        let phi0 = mv.operator.phi.value(0, 0);
        assert!((phi0 - 0.303264).abs() / 0.303264 < 1e-3, "{phi0}");
        assert_eq!(mv.sp1.y.value(0, 200), 1.0);
        assert_eq!(mv.sp2.y.value(0, 200), -0.5);
        assert_eq!(mv.sp3.y.value(0, 200), 0.0);
    }

    #[test]
    fn strategy_is_affine_in_wealth() {
        let op = EquilibriumOperator::new(
            Process::constant(0.0, 2),
            Process::constant(0.3, 2),
            Provenance::External,
        );
        let states = StatePaths {
            x: Process::Stochastic {
                n_paths: 2,
                values: vec![1.0, 2.0, 3.0, 4.0],
            },
            u: Process::zeros(2),
            initial: 1.0,
        };
        let u = equilibrium_strategy(&op, &states).unwrap();
        assert_eq!(u.path(1), vec![0.3, 0.3]);
    }
}
