//! Closed-loop equilibrium for dynamic variance hedging of a claim on
//! `W_T`.

use crate::bsde::{solve_linear_bsde, solve_linear_bsde_with, solve_mn, BsdePair, LinearBsdeSpec, SolveOptions, Terminal};
use crate::error::{Error, Result};
use crate::market::{
    evaluate_coefficients, BrownianGrid, ClaimSpec, CoefficientPaths, MarketScenario, Payoff, StatePaths,
};
use crate::mean_variance::first_pair;
use crate::operator::{EquilibriumOperator, Provenance};
use crate::process::Process;
use crate::regression::{fit, Basis};
use crate::stats::mean_se;

/// `lambda(t) = E[xi | F_t]` and its integrand `zeta`, `d lambda = zeta dW`.
#[derive(Clone, Debug)]
pub struct ClaimProcesses {
    pub lambda: Process,
    pub zeta: Process,
}

impl ClaimProcesses {
    pub fn terminal(&self) -> Vec<f64> {
        let n = self.lambda.n_paths().unwrap_or(1);
        self.lambda.node(self.lambda.n_nodes() - 1).to_vec(n)
    }
}

pub fn claim_processes(claim: &ClaimSpec, grid: &BrownianGrid) -> Result<ClaimProcesses> {
    claim.validate()?;
    let nodes = grid.n_nodes();
    match claim.payoff {
        Payoff::Constant { value } => Ok(ClaimProcesses {
            lambda: Process::constant(value, nodes),
            zeta: Process::zeros(nodes),
        }),
        Payoff::Linear => Ok(ClaimProcesses {
            lambda: grid.w_process(),
            zeta: Process::constant(1.0, nodes),
        }),
        Payoff::Bounded { .. } => {
            let terminal = grid.w_at(grid.n_steps()).iter().map(|w| claim.payoff_at(*w)).collect();
            let zero = Process::zeros(nodes);
            let pair = solve_linear_bsde_with(
                &LinearBsdeSpec::new(zero.clone(), zero.clone(), zero, Terminal::Paths(terminal)),
                grid,
                SolveOptions {
                    deterministic_shortcut: false,
                },
            )?;
            Ok(ClaimProcesses {
                lambda: pair.y,
                zeta: pair.z,
            })
        }
    }
}

/// Per-step drift `E[lambda_{k+1} - lambda_k | W_k]` at `W_k = 0`, with a
/// standard error, as a martingale diagnostic.
pub fn claim_drift(claim: &ClaimProcesses, grid: &BrownianGrid) -> Vec<(f64, f64)> {
    let n = grid.n_paths();
    (0..grid.n_steps())
        .map(|k| {
            let a = claim.lambda.node(k).to_vec(n);
            let b = claim.lambda.node(k + 1).to_vec(n);
            let d: Vec<f64> = b.iter().zip(&a).map(|(b, a)| b - a).collect();
            match crate::regression::fit_with_se(Basis::at_time(grid.time(k)), grid.w_at(k), &d) {
                Some(f) => (f.evaluate(0.0), f.standard_error(0.0).unwrap_or(0.0)),
                None => mean_se(&d),
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct HedgingEquilibrium {
    pub mn: BsdePair,
    pub sp1: BsdePair,
    pub sp2: BsdePair,
    pub operator: EquilibriumOperator,
    pub claim: ClaimProcesses,
}

impl HedgingEquilibrium {
    pub fn components(&self) -> Vec<(&'static str, &Process)> {
        vec![
            ("sP1", &self.sp1.y),
            ("sL1", &self.sp1.z),
            ("sP2", &self.sp2.y),
            ("sL2", &self.sp2.z),
            ("lambda", &self.claim.lambda),
            ("zeta", &self.claim.zeta),
        ]
    }
}

pub fn solve_hedging_equilibrium(
    scenario: &MarketScenario,
    claim: &ClaimSpec,
    grid: &BrownianGrid,
) -> Result<HedgingEquilibrium> {
    let coeffs = evaluate_coefficients(scenario, grid)?;
    let mn = solve_mn(&coeffs, grid)?;
    let claim = claim_processes(claim, grid)?;
    solve_hedging_equilibrium_from(&coeffs, mn, claim, grid)
}

/// As [`solve_hedging_equilibrium`], reusing an `(M, N)` solve and claim
/// processes.
pub fn solve_hedging_equilibrium_from(
    coeffs: &CoefficientPaths,
    mn: BsdePair,
    claim: ClaimProcesses,
    grid: &BrownianGrid,
) -> Result<HedgingEquilibrium> {
    grid.check_process(&claim.lambda, "lambda")?;
    grid.check_process(&claim.zeta, "zeta")?;
    let sp1 = first_pair(&mn)?;
    let theta_m = coeffs.theta();
    let sigma = &coeffs.sigma;
    let sp2 = solve_linear_bsde(
        &LinearBsdeSpec::new(
            Process::zeros(grid.n_nodes()),
            Process::combine([&theta_m, &sp1.z, &sp1.y], |[t, l, p]| -(t + l / p))?,
            Process::combine([&sp1.y, &coeffs.r, &claim.lambda, &theta_m, &claim.zeta], |[p, r, lam, t, z]| {
                p * (r * lam + t * z)
            })?,
            Terminal::Scalar(0.0),
        ),
        grid,
    )?;
    let theta = Process::combine([&sp1.z, sigma, &sp1.y], |[l, s, p]| -l / (s * p))?;
    let phi = Process::combine([&sp2.z, sigma, &sp1.y, &claim.zeta], |[l2, s, p, z]| -l2 / (s * p) + z / s)?;
    let operator = EquilibriumOperator::new(theta, phi, Provenance::Hedging);
    if !operator.is_finite() {
        return Err(Error::NonFinite {
            what: "hedging operator".into(),
            path: 0,
            step: 0,
        });
    }
    Ok(HedgingEquilibrium {
        mn,
        sp1,
        sp2,
        operator,
        claim,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceEstimate {
    pub value: f64,
    pub se: f64,
}

/// Average conditional variance `E[Var_t(xi - X(T))]` given `W_t`; at
/// `t = 0` this is the plain sample variance.
pub fn hedging_objective_reduction(
    states: &StatePaths,
    claim_terminal: &[f64],
    grid: &BrownianGrid,
    step: usize,
) -> Result<VarianceEstimate> {
    let x = states.terminal();
    if x.len() != claim_terminal.len() {
        return Err(Error::GridMismatch(format!(
            "{} wealth paths vs {} claim values",
            x.len(),
            claim_terminal.len()
        )));
    }
    let e: Vec<f64> = claim_terminal.iter().zip(&x).map(|(xi, x)| xi - x).collect();
    let w = grid.w_at(step);
    let f = fit(Basis::at_time(grid.time(step)), w, &e).ok_or(Error::SingularRegression { step })?;
    let sq: Vec<f64> = e.iter().zip(w).map(|(e, w)| (e - f.evaluate(*w)).powi(2)).collect();
    let (value, se) = mean_se(&sq);
    Ok(VarianceEstimate { value, se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{build_scenario, simulate_brownian, simulate_state, CoefficientSpec, Control, ScenarioConfig};

    fn scenario(r: f64, b: f64) -> MarketScenario {
        build_scenario(ScenarioConfig {
            r: CoefficientSpec::constant(r),
            b: CoefficientSpec::constant(b),
            sigma: CoefficientSpec::constant(0.2),
            horizon: 1.0,
            sigma_floor: 1e-4,
            claim: None,
        })
        .unwrap()
    }

    #[test]
    fn constant_and_linear_claims_are_closed_form() {
        let g = simulate_brownian(5, 10, 1.0, 1).unwrap();
        let c = claim_processes(&ClaimSpec::new(Payoff::Constant { value: 2.0 }), &g).unwrap();
        assert_eq!(c.lambda.sup_abs(), 2.0);
        assert_eq!(c.zeta.sup_abs(), 0.0);
        let l = claim_processes(&ClaimSpec::new(Payoff::Linear), &g).unwrap();
        assert_eq!(l.lambda.value(3, 7), g.w(3, 7));
        assert_eq!(l.zeta.value(3, 7), 1.0);
    }

    #[test]
    fn linear_claim_without_premium_gives_discounted_delta() {
        let g = simulate_brownian(2000, 100, 1.0, 2).unwrap();
        let h = solve_hedging_equilibrium(&scenario(0.03, 0.03), &ClaimSpec::new(Payoff::Linear), &g).unwrap();
        assert!(h.operator.theta.sup_abs() < 1e-14);
        let expect = (-0.03_f64).exp() / 0.2;
        let phi0 = h.operator.phi.value(0, 0);
        assert!((phi0 - expect).abs() / expect < 1e-2, "{phi0} vs {expect}");
    }

    #[test]
    fn constant_claim_at_zero_rate_needs_no_trading() {
        let g = simulate_brownian(50, 20, 1.0, 2).unwrap();
        let claim = ClaimSpec::new(Payoff::Constant { value: 1.5 });
        let h = solve_hedging_equilibrium(&scenario(0.0, 0.0), &claim, &g).unwrap();
        assert_eq!(h.sp2.y.sup_abs(), 0.0);
        assert_eq!(h.operator.phi.sup_abs(), 0.0);
    }

    #[test]
    fn constant_claim_unhedged_has_zero_variance() {
        let g = simulate_brownian(50, 20, 1.0, 2).unwrap();
        let c = evaluate_coefficients(&scenario(0.03, 0.08), &g).unwrap();
        let zero = Process::zeros(21);
        let s = simulate_state(&c, Control::Explicit(&zero), 1.0, &zero, &zero, &g).unwrap();
        let v = hedging_objective_reduction(&s, &[1.5; 50], &g, 0).unwrap();
        assert_eq!(v.value, 0.0);
    }
}
