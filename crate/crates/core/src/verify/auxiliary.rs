use super::objective::conditional_mean;
use crate::bsde::RiccatiSolution;
use crate::error::{Error, Result};
use crate::market::{BrownianGrid, CoefficientPaths, StatePaths};
use crate::operator::EquilibriumOperator;
use crate::process::Process;
use crate::stats::mean_se;

/// `(Y'(s, t), Z'(s, t))` for a fixed anchor `t`, and the diagonal values
/// `(Y'(s, s), Z'(s, s))` for every `s`. Nodes of `y` and `z` before the
/// anchor are zero.
#[derive(Clone, Debug)]
pub struct AuxiliaryPair {
    pub anchor: usize,
    pub y: Process,
    pub z: Process,
    pub diag_y: Process,
    pub diag_z: Process,
}

struct Inputs<'a> {
    sol: &'a RiccatiSolution,
    op: &'a EquilibriumOperator,
    sigma: &'a Process,
    x: &'a Process,
    h: &'a Process,
}

impl Inputs<'_> {
    /// `P2 X + P3` at node `k`, path `p`.
    fn tracked(&self, p: usize, k: usize) -> f64 {
        self.sol.p2.y.value(p, k) * self.x.value(p, k) + self.sol.p3.y.value(p, k)
    }

    fn y(&self, p: usize, k: usize, e: f64) -> f64 {
        let s = self.sol;
        s.p1.y.value(p, k) * self.x.value(p, k) - 2.0 * s.p2.y.value(p, k) * e + s.p4.y.value(p, k)
    }

    fn z(&self, p: usize, k: usize, e: f64) -> f64 {
        let s = self.sol;
        let p1 = s.p1.y.value(p, k);
        let sigma = self.sigma.value(p, k);
        -2.0 * s.p2.z.value(p, k) * e
            + (p1 * sigma * self.op.theta.value(p, k) + s.p1.z.value(p, k)) * self.x.value(p, k)
            + p1 * sigma * self.op.phi.value(p, k)
            + p1 * self.h.value(p, k)
            + s.p4.z.value(p, k)
    }
}

fn check(grid: &BrownianGrid, items: &[(&Process, &str)]) -> Result<()> {
    for (p, what) in items {
        grid.check_process(p, what)?;
    }
    Ok(())
}

pub fn build_auxiliary_pair(
    solution: &RiccatiSolution,
    operator: &EquilibriumOperator,
    coeffs: &CoefficientPaths,
    states: &StatePaths,
    h: &Process,
    anchor: usize,
    grid: &BrownianGrid,
) -> Result<AuxiliaryPair> {
    if anchor > grid.n_steps() {
        return Err(Error::GridMismatch(format!(
            "anchor step {anchor} beyond {} steps",
            grid.n_steps()
        )));
    }
    check(
        grid,
        &[
            (&states.x, "wealth"),
            (h, "h"),
            (&solution.p1.y, "P1"),
            (&solution.p4.y, "P4"),
            (&operator.theta, "theta"),
            (&operator.phi, "phi"),
        ],
    )?;
    let inputs = Inputs {
        sol: solution,
        op: operator,
        sigma: &coeffs.sigma,
        x: &states.x,
        h,
    };
    let n = grid.n_paths();
    let nodes = grid.n_nodes();
    let mut y = vec![0.0; n * nodes];
    let mut z = vec![0.0; n * nodes];
    let mut dy = vec![0.0; n * nodes];
    let mut dz = vec![0.0; n * nodes];
    for k in 0..nodes {
        let tracked: Vec<f64> = (0..n).map(|p| inputs.tracked(p, k)).collect();
        for p in 0..n {
            dy[k * n + p] = inputs.y(p, k, tracked[p]);
            dz[k * n + p] = inputs.z(p, k, tracked[p]);
        }
        if k < anchor {
            continue;
        }
        // At the anchor itself the conditional expectation is the identity.
        let cond = if k == anchor {
            tracked
        } else {
            conditional_mean(&tracked, grid, anchor)?
        };
        for p in 0..n {
            y[k * n + p] = inputs.y(p, k, cond[p]);
            z[k * n + p] = inputs.z(p, k, cond[p]);
        }
    }
    let build = |v| Process::from_step_major(n, v);
    Ok(AuxiliaryPair {
        anchor,
        y: build(y)?,
        z: build(z)?,
        diag_y: build(dy)?,
        diag_z: build(dz)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagonalReport {
    pub sup: f64,
    pub step: usize,
    pub path: usize,
}

/// `sup |beta Y'(s, s) + sigma Z'(s, s)|` over nodes and paths.
pub fn diagonal_identity_check(pair: &AuxiliaryPair, coeffs: &CoefficientPaths) -> Result<DiagonalReport> {
    let beta = coeffs.beta();
    let s = Process::combine([&beta, &pair.diag_y, &coeffs.sigma, &pair.diag_z], |[b, y, s, z]| b * y + s * z)?;
    let n = s.n_paths().unwrap_or(1);
    let mut best = DiagonalReport {
        sup: 0.0,
        step: 0,
        path: 0,
    };
    for k in 0..s.n_nodes() {
        for p in 0..n {
            let v = s.value(p, k).abs();
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "diagonal identity".into(),
                    path: p,
                    step: k,
                });
            }
            if v > best.sup {
                best = DiagonalReport { sup: v, step: k, path: p };
            }
        }
    }
    Ok(best)
}

/// Mean and standard error of a per-step quantity across paths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStat {
    pub step: usize,
    pub mean: f64,
    pub se: f64,
}

impl StepStat {
    pub fn z_score(&self) -> f64 {
        if self.se > 0.0 {
            self.mean / self.se
        } else if self.mean == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Replays one step of `dY' = -[(r + beta theta) Y' + theta sigma Z'] ds +
/// Z' dW` on the constructed pair:
/// `Y'_{k+1} - Y'_k + g_k dt - Z'_k dW_k` for each step after the anchor.
///
/// The projection `E_t[P2 X* + P3]` inside the pair is shared by all paths,
/// so its sampling noise shifts every residual together. The standard error
/// uses the influence form of the mean: the residual is affine in the
/// projected values, and a symmetric projection can be moved onto the
/// coefficients, `sum_p c_p (H u)_p = sum_p (H c)_p u_p`.
pub fn recursion_residuals(
    pair: &AuxiliaryPair,
    solution: &RiccatiSolution,
    operator: &EquilibriumOperator,
    coeffs: &CoefficientPaths,
    states: &StatePaths,
    grid: &BrownianGrid,
) -> Result<Vec<StepStat>> {
    let n = grid.n_paths();
    let dt = grid.dt();
    let beta = coeffs.beta();
    let anchor = pair.anchor;
    let tracked = Process::combine([&solution.p2.y, &states.x, &solution.p3.y], |[a, x, b]| a * x + b)?;
    let raw = |k: usize| tracked.node(k).to_vec(n);
    let projected = |k: usize| -> Result<Vec<f64>> {
        if k == anchor {
            Ok(raw(k))
        } else {
            conditional_mean(&raw(k), grid, anchor)
        }
    };
    (anchor..grid.n_steps())
        .map(|k| {
            let dw = grid.dw_at(k);
            let mut d = vec![0.0; n];
            // Coefficients of the residual on the projected values at k and k + 1.
            let mut on_k = vec![0.0; n];
            let mut on_next = vec![0.0; n];
            for p in 0..n {
                let theta = operator.theta.value(p, k);
                let sigma = coeffs.sigma.value(p, k);
                let a = coeffs.r.value(p, k) + beta.value(p, k) * theta;
                let (y0, z0) = (pair.y.value(p, k), pair.z.value(p, k));
                d[p] = pair.y.value(p, k + 1) - y0 + (a * y0 + theta * sigma * z0) * dt - z0 * dw[p];
                let (dy, dz) = (-2.0 * solution.p2.y.value(p, k), -2.0 * solution.p2.z.value(p, k));
                on_k[p] = -dy + (a * dy + theta * sigma * dz) * dt - dz * dw[p];
                on_next[p] = -2.0 * solution.p2.y.value(p, k + 1);
            }
            let mean = crate::stats::mean(&d);
            let (e_next, t_next) = (projected(k + 1)?, raw(k + 1));
            let h_next = conditional_mean(&on_next, grid, anchor)?;
            let mut psi: Vec<f64> = (0..n)
                .map(|p| d[p] - on_next[p] * e_next[p] + h_next[p] * t_next[p])
                .collect();
            if k > anchor {
                let (e_k, t_k) = (projected(k)?, raw(k));
                let h_k = conditional_mean(&on_k, grid, anchor)?;
                for p in 0..n {
                    psi[p] += h_k[p] * t_k[p] - on_k[p] * e_k[p];
                }
            }
            let (_, se) = mean_se(&psi);
            Ok(StepStat { step: k, mean, se })
        })
        .collect()
}

/// Mean one-step increments of `P2 X* + P3`, which should have no drift.
pub fn tracked_drift(solution: &RiccatiSolution, states: &StatePaths, grid: &BrownianGrid) -> Result<Vec<StepStat>> {
    let v = Process::combine([&solution.p2.y, &states.x, &solution.p3.y], |[a, x, b]| a * x + b)?;
    let n = grid.n_paths();
    Ok((0..grid.n_steps())
        .map(|k| {
            let d: Vec<f64> = (0..n).map(|p| v.value(p, k + 1) - v.value(p, k)).collect();
            let (mean, se) = mean_se(&d);
            StepStat { step: k, mean, se }
        })
        .collect())
}
