use std::f64::consts::SQRT_2;

use super::{solve_linear_bsde, BsdePair, LinearBsdeSpec, Terminal};
use crate::error::{Error, Result};
use crate::market::{evaluate_coefficients, BrownianGrid, CoefficientPaths, MarketScenario};
use crate::operator::{EquilibriumOperator, Provenance};
use crate::process::{Node, Process};

/// `M` must stay below `-M_FLOOR`.
const M_FLOOR: f64 = 1e-6;

/// Absolute tolerance for the two operator forms, scaled by `max(1, sup|.|)`.
const FORMULA_TOL: f64 = 1e-10;

/// Solves `dM = [rM + theta N]ds + N dW`, `M(T) = -sqrt(2)`.
pub fn solve_mn(coeffs: &CoefficientPaths, grid: &BrownianGrid) -> Result<BsdePair> {
    let spec = LinearBsdeSpec::new(
        coeffs.r.map(|r| -r),
        coeffs.theta().map(|t| -t),
        Process::zeros(grid.n_nodes()),
        Terminal::Scalar(-SQRT_2),
    );
    solve_linear_bsde(&spec, grid)
}

/// `(P1, L1)`, `(P2, L2)` and `Theta*`, assembled node-wise from `(M, N)`.
#[derive(Clone, Debug)]
pub struct RiccatiCore {
    pub p1: Process,
    pub l1: Process,
    pub p2: Process,
    pub l2: Process,
    pub theta: Process,
}

impl RiccatiCore {
    /// `P2(0) / P2`, the claimed transition process of the closed-loop
    /// wealth equation.
    pub fn transition_claim(&self) -> Process {
        let p2_0 = self.p2.value(0, 0);
        self.p2.map(|p| p2_0 / p)
    }
}

fn check_m(m: &Process) -> Result<()> {
    for k in 0..m.n_nodes() {
        let bad = match m.node(k) {
            Node::Scalar(v) => (!(v < -M_FLOOR)).then_some((0, v)),
            Node::Paths(vs) => vs.iter().position(|v| !(*v < -M_FLOOR)).map(|p| (p, vs[p])),
        };
        if let Some((path, value)) = bad {
            return Err(Error::DegenerateM { step: k, path, value });
        }
    }
    Ok(())
}

pub fn build_riccati_core(mn: &BsdePair, coeffs: &CoefficientPaths) -> Result<RiccatiCore> {
    check_m(&mn.y)?;
    let p1 = mn.y.map(|m| 4.0 / (m * m));
    let l1 = Process::combine([&mn.y, &mn.z], |[m, n]| -8.0 * n / (m * m * m))?;
    let p2 = p1.map(|p| (p / 2.0).sqrt());
    let l2 = Process::combine([&l1, &p2], |[l, p]| l / (4.0 * p))?;
    let theta = Process::combine([&l2, &coeffs.sigma, &p2], |[l, s, p]| -l / (s * p))?;
    let m_sup = mn.y.sup_abs();
    let floor = 4.0 / (m_sup * m_sup);
    for k in 0..p1.n_nodes() {
        let lo = match p1.node(k) {
            Node::Scalar(v) => v,
            Node::Paths(vs) => vs.iter().copied().fold(f64::INFINITY, f64::min),
        };
        if lo < floor * (1.0 - 1e-12) {
            return Err(Error::DegenerateP1 { step: k, value: lo });
        }
    }
    Ok(RiccatiCore { p1, l1, p2, l2, theta })
}

/// Solves `dPhi = -[(r + beta Theta) Phi + Theta sigma Psi]ds + Psi dW`,
/// `Phi(T) = -gamma`.
pub fn solve_phi_psi(theta: &Process, coeffs: &CoefficientPaths, gamma: f64, grid: &BrownianGrid) -> Result<BsdePair> {
    let beta = coeffs.beta();
    let spec = LinearBsdeSpec::new(
        Process::combine([&coeffs.r, &beta, theta], |[r, b, t]| r + b * t)?,
        Process::combine([theta, &coeffs.sigma], |[t, s]| t * s)?,
        Process::zeros(grid.n_nodes()),
        Terminal::Scalar(-gamma),
    );
    solve_linear_bsde(&spec, grid)
}

#[derive(Clone, Debug)]
pub struct P3Solution {
    pub p3: BsdePair,
    pub phi_star: Process,
}

/// Solves the `(P3, L3)` equation and assembles `phi*` from it.
pub fn solve_p3_phi_star(
    core: &RiccatiCore,
    phi_psi: &BsdePair,
    l: &Process,
    h: &Process,
    coeffs: &CoefficientPaths,
    grid: &BrownianGrid,
) -> Result<P3Solution> {
    grid.check_process(l, "l")?;
    grid.check_process(h, "h")?;
    let beta = coeffs.beta();
    let sigma = &coeffs.sigma;
    // beta Phi + sigma Psi + sigma P1 h
    let q = Process::combine([&beta, &phi_psi.y, sigma, &phi_psi.z, &core.p1, h], |[b, f, s, g, p1, h]| {
        b * f + s * g + s * p1 * h
    })?;
    let kappa = Process::combine([&core.p2, &beta, &core.l2, sigma, &core.p1], |[p2, b, l2, s, p1]| {
        (p2 * b + l2 * s) * 2.0 * p2 / (s * p1)
    })?;
    let source = Process::combine(
        [&core.p2, &beta, &core.l2, sigma, &core.p1, &q, l, h],
        |[p2, b, l2, s, p1, q, l, h]| (p2 * b + l2 * s) * q / (s * s * p1) - p2 * l - l2 * h,
    )?;
    let spec = LinearBsdeSpec::new(
        Process::zeros(grid.n_nodes()),
        kappa.map(|k| -k),
        source.map(|c| -c),
        Terminal::Scalar(0.0),
    );
    let p3 = solve_linear_bsde(&spec, grid)?;
    let phi_star = Process::combine([&core.p2, &p3.z, sigma, &core.p1, &q], |[p2, l3, s, p1, q]| {
        -2.0 * p2 * l3 / (s * p1) - q / (s * s * p1)
    })?;
    Ok(P3Solution { p3, phi_star })
}

/// `P4 = Phi + 2 P2 P3`, `L4 = Psi + 2 L2 P3 + 2 L3 P2`.
pub fn assemble_p4(phi_psi: &BsdePair, p2: &Process, l2: &Process, p3: &BsdePair) -> Result<BsdePair> {
    let y = Process::combine([&phi_psi.y, p2, &p3.y], |[f, p2, p3]| f + 2.0 * p2 * p3)?;
    let z = Process::combine([&phi_psi.z, l2, &p3.y, &p3.z, p2], |[g, l2, p3, l3, p2]| {
        g + 2.0 * l2 * p3 + 2.0 * l3 * p2
    })?;
    Ok(BsdePair {
        y,
        z,
        residual_rms: Vec::new(),
    })
}

/// `(Theta*, phi*)` written through `P1, ..., P4` only.
pub fn operator_alternative_form(
    core: &RiccatiCore,
    p3: &BsdePair,
    p4: &BsdePair,
    coeffs: &CoefficientPaths,
    h: &Process,
) -> Result<(Process, Process)> {
    let beta = coeffs.beta();
    let sigma = &coeffs.sigma;
    let theta = Process::combine([&beta, &core.p1, &core.p2, sigma, &core.l1, &core.l2], |[b, p1, p2, s, l1, l2]| {
        -(b * (p1 - 2.0 * p2 * p2) + s * (l1 - 2.0 * l2 * p2)) / (s * s * p1)
    })?;
    let phi = Process::combine(
        [&beta, &p4.y, &core.p2, &p3.y, sigma, &core.p1, h, &p4.z, &core.l2],
        |[b, p4, p2, p3, s, p1, h, l4, l2]| -(b * (p4 - 2.0 * p2 * p3) + s * (p1 * h + l4 - 2.0 * l2 * p3)) / (s * s * p1),
    )?;
    Ok((theta, phi))
}

/// All backward components of the general problem.
#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    pub mn: BsdePair,
    pub p1: BsdePair,
    pub p2: BsdePair,
    pub p3: BsdePair,
    pub p4: BsdePair,
    pub phi_psi: BsdePair,
    pub gamma: f64,
}

impl RiccatiSolution {
    /// Named components, in dump order.
    pub fn components(&self) -> Vec<(&'static str, &Process)> {
        vec![
            ("M", &self.mn.y),
            ("N", &self.mn.z),
            ("P1", &self.p1.y),
            ("L1", &self.p1.z),
            ("P2", &self.p2.y),
            ("L2", &self.p2.z),
            ("P3", &self.p3.y),
            ("L3", &self.p3.z),
            ("P4", &self.p4.y),
            ("L4", &self.p4.z),
            ("Phi", &self.phi_psi.y),
            ("Psi", &self.phi_psi.z),
        ]
    }

    /// Node-wise sup of `|P1 - 2 P2^2|`, `|L1 - 4 P2 L2|` and
    /// `|P4 - Phi - 2 P2 P3|`.
    pub fn identity_residuals(&self) -> Result<[(&'static str, f64); 3]> {
        let (p1, l1, p2, l2) = (&self.p1.y, &self.p1.z, &self.p2.y, &self.p2.z);
        let a = Process::combine([p1, p2], |[a, b]| a - 2.0 * b * b)?.sup_abs();
        let b = Process::combine([l1, p2, l2], |[l, p, m]| l - 4.0 * p * m)?.sup_abs();
        let c = Process::combine([&self.p4.y, &self.phi_psi.y, p2, &self.p3.y], |[p4, f, p, q]| {
            p4 - f - 2.0 * p * q
        })?
        .sup_abs();
        Ok([("P1 - 2 P2^2", a), ("L1 - 4 P2 L2", b), ("P4 - Phi - 2 P2 P3", c)])
    }
}

fn pair(y: Process, z: Process) -> BsdePair {
    BsdePair {
        y,
        z,
        residual_rms: Vec::new(),
    }
}

fn cross_check(which: &str, a: &Process, b: &Process) -> Result<()> {
    let diff = a.max_abs_diff(b)?;
    let scale = a.sup_abs().max(b.sup_abs()).max(1.0);
    if diff > FORMULA_TOL * scale || !diff.is_finite() {
        return Err(Error::FormulaMismatch {
            which: which.to_string(),
            max_diff: diff,
        });
    }
    Ok(())
}

/// Full constructive pipeline for the general problem with inhomogeneous
/// terms `l`, `h`.
pub fn general_equilibrium(
    scenario: &MarketScenario,
    gamma: f64,
    l: &Process,
    h: &Process,
    grid: &BrownianGrid,
) -> Result<(RiccatiSolution, EquilibriumOperator)> {
    let coeffs = evaluate_coefficients(scenario, grid)?;
    let mn = solve_mn(&coeffs, grid)?;
    general_equilibrium_from(&coeffs, mn, gamma, l, h, grid)
}

/// As [`general_equilibrium`], reusing an `(M, N)` solve.
pub fn general_equilibrium_from(
    coeffs: &CoefficientPaths,
    mn: BsdePair,
    gamma: f64,
    l: &Process,
    h: &Process,
    grid: &BrownianGrid,
) -> Result<(RiccatiSolution, EquilibriumOperator)> {
    let core = build_riccati_core(&mn, coeffs)?;
    let phi_psi = solve_phi_psi(&core.theta, coeffs, gamma, grid)?;
    let P3Solution { p3, phi_star } = solve_p3_phi_star(&core, &phi_psi, l, h, coeffs, grid)?;
    let p4 = assemble_p4(&phi_psi, &core.p2, &core.l2, &p3)?;
    let (theta_alt, phi_alt) = operator_alternative_form(&core, &p3, &p4, coeffs, h)?;
    cross_check("Theta*", &core.theta, &theta_alt)?;
    cross_check("phi*", &phi_star, &phi_alt)?;
    let operator = EquilibriumOperator::new(core.theta, phi_star, Provenance::General);
    if !operator.is_finite() {
        return Err(Error::NonFinite {
            what: "equilibrium operator".into(),
            path: 0,
            step: 0,
        });
    }
    let solution = RiccatiSolution {
        mn,
        p1: pair(core.p1, core.l1),
        p2: pair(core.p2, core.l2),
        p3,
        p4,
        phi_psi,
        gamma,
    };
    Ok((solution, operator))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{build_scenario, simulate_brownian, CoefficientSpec, ScenarioConfig};

    fn scenario(r: f64, b: f64, sigma: f64) -> MarketScenario {
        build_scenario(ScenarioConfig {
            r: CoefficientSpec::constant(r),
            b: CoefficientSpec::constant(b),
            sigma: CoefficientSpec::constant(sigma),
            horizon: 1.0,
            sigma_floor: 1e-4,
            claim: None,
        })
        .unwrap()
    }

    #[test]
    fn terminal_constants_give_trivial_core() {
        let mn = BsdePair {
            y: Process::constant(-SQRT_2, 5),
            z: Process::zeros(5),
            residual_rms: vec![],
        };
        let g = simulate_brownian(3, 4, 1.0, 0).unwrap();
        let c = evaluate_coefficients(&scenario(0.0, 0.0, 0.2), &g).unwrap();
        let core = build_riccati_core(&mn, &c).unwrap();
        for k in 0..5 {
            assert!((core.p1.value(0, k) - 2.0).abs() < 1e-15);
            assert!((core.p2.value(0, k) - 1.0).abs() < 1e-15);
            assert_eq!(core.l1.value(0, k), 0.0);
            assert_eq!(core.theta.value(0, k), 0.0);
        }
    }

    #[test]
    fn positive_m_is_degenerate() {
        let mn = BsdePair {
            y: Process::Deterministic(vec![-1.0, 1e-9, -1.0]),
            z: Process::zeros(3),
            residual_rms: vec![],
        };
        let g = simulate_brownian(3, 2, 1.0, 0).unwrap();
        let c = evaluate_coefficients(&scenario(0.0, 0.0, 0.2), &g).unwrap();
        assert!(matches!(
            build_riccati_core(&mn, &c),
            Err(Error::DegenerateM { step: 1, .. })
        ));
    }

    #[test]
    fn constants_reproduce_closed_form_phi() {
        let g = simulate_brownian(10, 200, 1.0, 0).unwrap();
        let zero = Process::zeros(201);
        let (sol, op) = general_equilibrium(&scenario(0.03, 0.08, 0.2), 0.5, &zero, &zero, &g).unwrap();
        assert!(op.theta.sup_abs() < 1e-14);
        let expect = 0.5 * 0.05 / (2.0 * 0.04) * (-0.03_f64).exp();
        assert!((op.phi.value(0, 0) - expect).abs() / expect < 1e-3);
        assert_eq!(sol.p4.y.value(0, 200), -0.5);
        assert_eq!(sol.phi_psi.y.value(0, 200), -0.5);
    }

    #[test]
    fn zero_gamma_and_sources_give_zero_phi() {
        let g = simulate_brownian(10, 50, 1.0, 0).unwrap();
        let zero = Process::zeros(51);
        let (sol, op) = general_equilibrium(&scenario(0.03, 0.08, 0.2), 0.0, &zero, &zero, &g).unwrap();
        assert_eq!(op.phi.sup_abs(), 0.0);
        assert_eq!(sol.p3.y.sup_abs(), 0.0);
    }
}
