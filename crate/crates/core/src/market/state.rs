use rayon::prelude::*;

use super::{BrownianGrid, CoefficientPaths};
use crate::error::{Error, Result};
use crate::operator::EquilibriumOperator;
use crate::process::{Node, Process};

/// How the control is produced along each path.
#[derive(Clone, Copy, Debug)]
pub enum Control<'a> {
    /// `u = theta * X + phi` at the left endpoint of each step.
    Feedback(&'a EquilibriumOperator),
    /// A given control process.
    Explicit(&'a Process),
}

/// Simulated wealth paths together with the control that generated them.
#[derive(Clone, Debug)]
pub struct StatePaths {
    pub x: Process,
    pub u: Process,
    pub initial: f64,
}

impl StatePaths {
    pub fn terminal(&self) -> Vec<f64> {
        let n = self.x.n_paths().unwrap_or(1);
        self.x.node(self.x.n_nodes() - 1).to_vec(n)
    }
}

/// Size of a spike perturbation, fixed at its start time per path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PerturbationAmount {
    Constant(f64),
    /// `scale * clamp(W_t, -cap, cap)`
    ClampedBrownian { scale: f64, cap: f64 },
}

impl PerturbationAmount {
    pub fn at(&self, w_t: f64) -> f64 {
        match *self {
            PerturbationAmount::Constant(c) => c,
            PerturbationAmount::ClampedBrownian { scale, cap } => scale * w_t.clamp(-cap, cap),
        }
    }

    pub fn bound(&self) -> f64 {
        match *self {
            PerturbationAmount::Constant(c) => c.abs(),
            PerturbationAmount::ClampedBrownian { scale, cap } => (scale * cap).abs(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            PerturbationAmount::Constant(c) => PerturbationAmount::Constant(c * factor),
            PerturbationAmount::ClampedBrownian { scale, cap } => PerturbationAmount::ClampedBrownian {
                scale: scale * factor,
                cap,
            },
        }
    }
}

/// Spike `v 1_{[t, t + eps)}` added to the equilibrium control, with `t` and
/// `eps` on grid nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationSpec {
    start: usize,
    steps: usize,
    amount: PerturbationAmount,
}

impl PerturbationSpec {
    /// Snaps `t` to the nearest node and `eps` to a whole number of steps
    /// (at least one).
    pub fn new(grid: &BrownianGrid, t: f64, eps: f64, amount: PerturbationAmount) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("perturbation length must be positive, got {eps}")));
        }
        let start = grid.step_of(t);
        let steps = ((eps / grid.dt()).round() as usize).max(1);
        Self::from_steps(start, steps, amount, grid.n_steps())
    }

    pub fn from_steps(start: usize, steps: usize, amount: PerturbationAmount, n_steps: usize) -> Result<Self> {
        if steps == 0 || start + steps > n_steps {
            return Err(Error::InvalidArgument(format!(
                "perturbation [{start}, {}) does not fit in {n_steps} steps",
                start + steps
            )));
        }
        if let PerturbationAmount::ClampedBrownian { cap, .. } = amount {
            if !(cap >= 0.0 && cap.is_finite()) {
                return Err(Error::InvalidArgument(format!("clamp must be finite and nonnegative, got {cap}")));
            }
        }
        if !amount.bound().is_finite() {
            return Err(Error::InvalidArgument("perturbation amount must be bounded".into()));
        }
        Ok(PerturbationSpec { start, steps, amount })
    }

    pub fn start_step(&self) -> usize {
        self.start
    }

    pub fn duration_steps(&self) -> usize {
        self.steps
    }

    pub fn amount(&self) -> PerturbationAmount {
        self.amount
    }

    pub fn epsilon(&self, grid: &BrownianGrid) -> f64 {
        self.steps as f64 * grid.dt()
    }

    pub fn is_active(&self, step: usize) -> bool {
        step >= self.start && step < self.start + self.steps
    }

    /// Per-path perturbation amounts, fixed by `W` at the start node.
    pub fn amounts(&self, grid: &BrownianGrid) -> Vec<f64> {
        grid.w_at(self.start).iter().map(|w| self.amount.at(*w)).collect()
    }
}

/// Coefficients and control inputs at one node.
struct StepInputs<'a> {
    r: Node<'a>,
    b: Node<'a>,
    sigma: Node<'a>,
    dw: &'a [f64],
    dt: f64,
}

impl<'a> StepInputs<'a> {
    fn at(coeffs: &'a CoefficientPaths, grid: &'a BrownianGrid, k: usize) -> Self {
        StepInputs {
            r: coeffs.r.node(k),
            b: coeffs.b.node(k),
            sigma: coeffs.sigma.node(k),
            dw: grid.dw_at(k),
            dt: grid.dt(),
        }
    }

    /// One Euler step of `dX = [rX + beta u + l]ds + [sigma u + h]dW`.
    #[inline]
    fn advance(&self, p: usize, x: f64, u: f64, l: f64, h: f64) -> f64 {
        let r = self.r.get(p);
        let beta = self.b.get(p) - r;
        let sigma = self.sigma.get(p);
        x + (r * x + beta * u + l) * self.dt + (sigma * u + h) * self.dw[p]
    }
}

fn check_inputs(coeffs: &CoefficientPaths, grid: &BrownianGrid, extra: &[(&Process, &str)]) -> Result<()> {
    grid.check_process(&coeffs.r, "r")?;
    grid.check_process(&coeffs.b, "b")?;
    grid.check_process(&coeffs.sigma, "sigma")?;
    for (p, name) in extra {
        grid.check_process(p, name)?;
    }
    Ok(())
}

fn first_non_finite(values: &[f64]) -> Option<usize> {
    values.iter().position(|v| !v.is_finite())
}

fn ensure_finite(values: &[f64], what: &str, step: usize) -> Result<()> {
    match first_non_finite(values) {
        Some(path) => Err(Error::NonFinite {
            what: what.to_string(),
            path,
            step,
        }),
        None => Ok(()),
    }
}

/// Euler-Maruyama simulation of the controlled wealth equation with
/// inhomogeneous terms `l` and `h`.
pub fn simulate_state(
    coeffs: &CoefficientPaths,
    control: Control<'_>,
    x0: f64,
    l: &Process,
    h: &Process,
    grid: &BrownianGrid,
) -> Result<StatePaths> {
    match control {
        Control::Feedback(op) => {
            check_inputs(coeffs, grid, &[(&op.theta, "theta"), (&op.phi, "phi"), (l, "l"), (h, "h")])?
        }
        Control::Explicit(u) => check_inputs(coeffs, grid, &[(u, "u"), (l, "l"), (h, "h")])?,
    }
    let n = grid.n_paths();
    let nodes = grid.n_nodes();
    let mut xs = vec![0.0; nodes * n];
    let mut us = vec![0.0; nodes * n];
    xs[..n].fill(x0);
    let control_at = |k: usize, p: usize, x: f64| match control {
        Control::Feedback(op) => op.theta.node(k).get(p) * x + op.phi.node(k).get(p),
        Control::Explicit(u) => u.node(k).get(p),
    };
    for k in 0..grid.n_steps() {
        let inputs = StepInputs::at(coeffs, grid, k);
        let (lk, hk) = (l.node(k), h.node(k));
        let (done, rest) = xs.split_at_mut((k + 1) * n);
        let cur = &done[k * n..];
        let next = &mut rest[..n];
        let u_row = &mut us[k * n..(k + 1) * n];
        next.par_iter_mut()
            .zip(u_row.par_iter_mut())
            .enumerate()
            .for_each(|(p, (xn, un))| {
                let u = control_at(k, p, cur[p]);
                *un = u;
                *xn = inputs.advance(p, cur[p], u, lk.get(p), hk.get(p));
            });
        ensure_finite(next, "wealth", k + 1)?;
    }
    let last = grid.n_steps();
    let (xl, ul) = (&xs[last * n..], &mut us[last * n..]);
    for p in 0..n {
        ul[p] = control_at(last, p, xl[p]);
    }
    Ok(StatePaths {
        x: Process::Stochastic { n_paths: n, values: xs },
        u: Process::Stochastic { n_paths: n, values: us },
        initial: x0,
    })
}

/// Simulates `X*`, the perturbed state `X0` and their difference `X1` on
/// common noise. `X1` is advanced by its own linear recursion rather than by
/// subtraction.
pub fn simulate_perturbed_pair(
    coeffs: &CoefficientPaths,
    operator: &EquilibriumOperator,
    x0: f64,
    pert: &PerturbationSpec,
    grid: &BrownianGrid,
) -> Result<(StatePaths, StatePaths, StatePaths)> {
    let zero = Process::zeros(grid.n_nodes());
    let star = simulate_state(coeffs, Control::Feedback(operator), x0, &zero, &zero, grid)?;
    let n = grid.n_paths();
    let v = pert.amounts(grid);
    let mut spike = vec![0.0; grid.n_nodes() * n];
    for k in pert.start..pert.start + pert.steps {
        spike[k * n..(k + 1) * n].copy_from_slice(&v);
    }
    let spike = Process::Stochastic { n_paths: n, values: spike };
    let perturbed_phi = Process::combine([&operator.phi, &spike], |[a, b]| a + b)?;
    let perturbed = EquilibriumOperator::new(operator.theta.clone(), perturbed_phi, operator.provenance);
    let x_pert = simulate_state(coeffs, Control::Feedback(&perturbed), x0, &zero, &zero, grid)?;
    let difference = EquilibriumOperator::new(operator.theta.clone(), spike, operator.provenance);
    let x_diff = simulate_state(coeffs, Control::Feedback(&difference), 0.0, &zero, &zero, grid)?;
    Ok((star, x_pert, x_diff))
}

/// Terminal values of `X*` and of `X1` for each perturbation, advancing only
/// the current node so memory stays linear in the number of paths.
pub fn terminal_values(
    coeffs: &CoefficientPaths,
    operator: &EquilibriumOperator,
    x0: f64,
    perts: &[PerturbationSpec],
    grid: &BrownianGrid,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_inputs(coeffs, grid, &[(&operator.theta, "theta"), (&operator.phi, "phi")])?;
    let n = grid.n_paths();
    let mut x = vec![x0; n];
    let mut diffs = vec![vec![0.0; n]; perts.len()];
    let amounts: Vec<Vec<f64>> = perts.iter().map(|p| p.amounts(grid)).collect();
    for k in 0..grid.n_steps() {
        let inputs = StepInputs::at(coeffs, grid, k);
        let theta = operator.theta.node(k);
        let phi = operator.phi.node(k);
        x.par_iter_mut().enumerate().for_each(|(p, xp)| {
            let u = theta.get(p) * *xp + phi.get(p);
            *xp = inputs.advance(p, *xp, u, 0.0, 0.0);
        });
        ensure_finite(&x, "wealth", k + 1)?;
        for ((pert, v), y) in perts.iter().zip(&amounts).zip(diffs.iter_mut()) {
            let active = pert.is_active(k);
            if !active && k < pert.start {
                continue;
            }
            y.par_iter_mut().enumerate().for_each(|(p, yp)| {
                let spike = if active { v[p] } else { 0.0 };
                let u = theta.get(p) * *yp + spike;
                *yp = inputs.advance(p, *yp, u, 0.0, 0.0);
            });
            ensure_finite(y, "perturbation", k + 1)?;
        }
    }
    Ok((x, diffs))
}

/// Transition process of the closed-loop wealth equation:
/// `d F = F [(r + beta theta) ds + sigma theta dW]`, `F(0) = 1`.
pub fn forward_transition(coeffs: &CoefficientPaths, theta: &Process, grid: &BrownianGrid) -> Result<Process> {
    let zero = Process::zeros(grid.n_nodes());
    let op = EquilibriumOperator::new(theta.clone(), zero.clone(), crate::operator::Provenance::External);
    Ok(simulate_state(coeffs, Control::Feedback(&op), 1.0, &zero, &zero, grid)?.x)
}
