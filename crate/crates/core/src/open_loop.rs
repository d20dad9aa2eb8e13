//! Open-loop equilibrium for the mean-variance problem and its comparison
//! with the closed-loop operator.

use std::fmt;

use crate::bsde::{solve_bsde_explicit, solve_linear_bsde, solve_mn, BsdePair, LinearBsdeSpec, Terminal};
use crate::error::{Error, Result};
use crate::market::{evaluate_coefficients, BrownianGrid, CoefficientPaths, MarketScenario};
use crate::mean_variance::first_pair;
use crate::operator::{EquilibriumOperator, Provenance};
use crate::process::Process;
use crate::stats::mean;

/// How the first pair `(cP1, cL1)` is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FirstPairMethod {
    /// `cP1 = -sqrt(2) / M` from the linear `(M, N)` equation.
    #[default]
    Substitution,
    /// Explicit regression on the quadratic driver itself.
    DirectQuadratic,
}

#[derive(Clone, Debug)]
pub struct OpenLoopEquilibrium {
    pub cp1: BsdePair,
    pub cp2: BsdePair,
    pub cp3: BsdePair,
    pub cp4: BsdePair,
    pub operator: EquilibriumOperator,
}

impl OpenLoopEquilibrium {
    pub fn components(&self) -> Vec<(&'static str, &Process)> {
        vec![
            ("cP1", &self.cp1.y),
            ("cL1", &self.cp1.z),
            ("cP2", &self.cp2.y),
            ("cL2", &self.cp2.z),
            ("cP3", &self.cp3.y),
            ("cL3", &self.cp3.z),
            ("cP4", &self.cp4.y),
            ("cL4", &self.cp4.z),
        ]
    }
}

pub fn solve_openloop(scenario: &MarketScenario, gamma: f64, grid: &BrownianGrid) -> Result<OpenLoopEquilibrium> {
    let coeffs = evaluate_coefficients(scenario, grid)?;
    solve_openloop_with(&coeffs, gamma, grid, FirstPairMethod::Substitution)
}

/// Solves `dP = -[rP - beta L / sigma - L^2 / P] ds + L dW`, `P(T) = 1`,
/// directly.
fn direct_first_pair(coeffs: &CoefficientPaths, grid: &BrownianGrid) -> Result<BsdePair> {
    let theta = coeffs.theta();
    let (r, sigma) = (&coeffs.r, &coeffs.sigma);
    solve_bsde_explicit(
        |k, p, y, z| {
            let s = sigma.value(p, k);
            r.value(p, k) * y - theta.value(p, k) * s * z / s - z * z / y
        },
        &Terminal::Scalar(1.0),
        grid,
    )
}

pub fn solve_openloop_with(
    coeffs: &CoefficientPaths,
    gamma: f64,
    grid: &BrownianGrid,
    method: FirstPairMethod,
) -> Result<OpenLoopEquilibrium> {
    let cp1 = match method {
        FirstPairMethod::Substitution => first_pair(&solve_mn(coeffs, grid)?)?,
        FirstPairMethod::DirectQuadratic => direct_first_pair(coeffs, grid)?,
    };
    solve_openloop_from(coeffs, cp1, gamma, grid)
}

/// Remaining open-loop pairs given `(cP1, cL1)`.
pub fn solve_openloop_from(
    coeffs: &CoefficientPaths,
    cp1: BsdePair,
    gamma: f64,
    grid: &BrownianGrid,
) -> Result<OpenLoopEquilibrium> {
    let nodes = grid.n_nodes();
    let beta = coeffs.beta();
    let sigma = &coeffs.sigma;
    let cp2 = solve_linear_bsde(
        &LinearBsdeSpec::new(
            coeffs.r.clone(),
            Process::zeros(nodes),
            Process::zeros(nodes),
            Terminal::Scalar(-2.0),
        ),
        grid,
    )?;
    let ratio2 = Process::combine([&cp2.z, &cp2.y], |[l, p]| l / p)?;
    let cp3 = solve_linear_bsde(
        &LinearBsdeSpec::new(
            Process::combine([&coeffs.r, &beta, &ratio2, sigma], |[r, b, q, s]| r - b * q / s)?,
            ratio2.map(|q| -q),
            Process::zeros(nodes),
            Terminal::Scalar(-gamma),
        ),
        grid,
    )?;
    // cP1 beta + cL1 sigma
    let tilt = Process::combine([&cp1.y, &beta, &cp1.z, sigma], |[p, b, l, s]| p * b + l * s)?;
    let cp4 = solve_linear_bsde(
        &LinearBsdeSpec::new(
            Process::zeros(nodes),
            Process::combine([&tilt, sigma, &cp1.y], |[m, s, p]| -m / (s * p))?,
            Process::combine([&tilt, &beta, &cp3.y, sigma, &cp3.z, &cp2.y, &cp1.y], |[m, b, p3, s, l3, p2, p1]| {
                m * (b * p3 + s * l3) / (s * s * p2 * p1)
            })?,
            Terminal::Scalar(0.0),
        ),
        grid,
    )?;
    let theta = Process::combine([&cp1.z, sigma, &cp1.y], |[l, s, p]| -l / (s * p))?;
    let phi = Process::combine(
        [&beta, &cp3.y, sigma, &cp3.z, &cp2.y, &cp1.y, &cp4.z],
        |[b, p3, s, l3, p2, p1, l4]| (b * p3 + s * l3) / (s * s * p2 * p1) - l4 / (s * p1),
    )?;
    let operator = EquilibriumOperator::new(theta, phi, Provenance::OpenLoop);
    if !operator.is_finite() {
        return Err(Error::NonFinite {
            what: "open-loop operator".into(),
            path: 0,
            step: 0,
        });
    }
    Ok(OpenLoopEquilibrium {
        cp1,
        cp2,
        cp3,
        cp4,
        operator,
    })
}

/// Relative tolerance for operator equality.
pub const EQUALITY_TOL: f64 = 0.02;

/// Differences that count as equal regardless of scale.
const ABSOLUTE_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComponentDiff {
    pub sup: f64,
    pub l2: f64,
    /// `sup |a - b| / max(sup |a|, sup |b|)`; zero when both vanish.
    pub relative: f64,
}

impl ComponentDiff {
    fn between(a: &Process, b: &Process) -> Result<Self> {
        let d = Process::combine([a, b], |[a, b]| a - b)?;
        let sup = d.sup_abs();
        let squares: Vec<f64> = (0..d.n_nodes())
            .map(|k| {
                let n = d.n_paths().unwrap_or(1);
                mean(&d.node(k).to_vec(n).iter().map(|v| v * v).collect::<Vec<_>>())
            })
            .collect();
        let l2 = mean(&squares).sqrt();
        let scale = a.sup_abs().max(b.sup_abs());
        let relative = if sup <= ABSOLUTE_FLOOR { 0.0 } else { sup / scale };
        Ok(ComponentDiff { sup, l2, relative })
    }

    pub fn within(&self, tol: f64) -> bool {
        self.sup <= ABSOLUTE_FLOOR || self.relative <= tol
    }
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub theta: ComponentDiff,
    pub phi: ComponentDiff,
    /// Always judged.
    pub theta_equal: bool,
    /// Judged only when the short rate is deterministic.
    pub phi_equal: Option<bool>,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.theta_equal && self.phi_equal.unwrap_or(true)
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "theta: sup {:.6e}  l2 {:.6e}  relative {:.6e}  {}",
            self.theta.sup,
            self.theta.l2,
            self.theta.relative,
            if self.theta_equal { "equal" } else { "DIFFERENT" }
        )?;
        let verdict = match self.phi_equal {
            Some(true) => "equal",
            Some(false) => "DIFFERENT",
            None => "not judged (random rate)",
        };
        write!(
            f,
            "phi:   sup {:.6e}  l2 {:.6e}  relative {:.6e}  {}",
            self.phi.sup, self.phi.l2, self.phi.relative, verdict
        )
    }
}

pub fn compare_operators(
    a: &EquilibriumOperator,
    b: &EquilibriumOperator,
    rate_is_deterministic: bool,
) -> Result<ComparisonReport> {
    let theta = ComponentDiff::between(&a.theta, &b.theta)?;
    let phi = ComponentDiff::between(&a.phi, &b.phi)?;
    Ok(ComparisonReport {
        theta,
        phi,
        theta_equal: theta.within(EQUALITY_TOL),
        phi_equal: rate_is_deterministic.then(|| phi.within(EQUALITY_TOL)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{build_scenario, simulate_brownian, CoefficientSpec, ScenarioConfig};

    fn constants(gamma_free_rate: f64) -> MarketScenario {
        build_scenario(ScenarioConfig {
            r: CoefficientSpec::constant(gamma_free_rate),
            b: CoefficientSpec::constant(0.08),
            sigma: CoefficientSpec::constant(0.2),
            horizon: 1.0,
            sigma_floor: 1e-4,
            claim: None,
        })
        .unwrap()
    }

    #[test]
    fn terminal_values() {
        let g = simulate_brownian(10, 40, 1.0, 1).unwrap();
        let ol = solve_openloop(&constants(0.03), 0.5, &g).unwrap();
        assert_eq!(ol.cp1.y.value(0, 40), 1.0);
        assert_eq!(ol.cp2.y.value(0, 40), -2.0);
        assert_eq!(ol.cp3.y.value(0, 40), -0.5);
        assert_eq!(ol.cp4.y.value(0, 40), 0.0);
    }

    #[test]
    fn constants_match_closed_loop_value() {
        let g = simulate_brownian(10, 200, 1.0, 1).unwrap();
        let ol = solve_openloop(&constants(0.03), 0.5, &g).unwrap();
        assert_eq!(ol.cp4.z.sup_abs(), 0.0);
        assert!(ol.operator.theta.sup_abs() < 1e-14);
        assert!((ol.operator.phi.value(0, 0) - 0.303264).abs() / 0.303264 < 1e-3);
    }

    #[test]
    fn zero_gamma_gives_zero_phi() {
        let g = simulate_brownian(10, 20, 1.0, 1).unwrap();
        let ol = solve_openloop(&constants(0.03), 0.0, &g).unwrap();
        assert_eq!(ol.operator.phi.sup_abs(), 0.0);
    }

    #[test]
    fn self_comparison_is_exact() {
        let g = simulate_brownian(10, 20, 1.0, 1).unwrap();
        let ol = solve_openloop(&constants(0.03), 0.5, &g).unwrap();
        let rep = compare_operators(&ol.operator, &ol.operator, true).unwrap();
        assert_eq!(rep.theta.sup, 0.0);
        assert_eq!(rep.phi.sup, 0.0);
        assert!(rep.passed());
    }
}
