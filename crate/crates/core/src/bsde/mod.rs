//! Linear backward SDEs on the shared grid and the constructive Riccati
//! assembly built on top of them.
//!
//! Every system is written as `dY = -(a Y + b Z + c) ds + Z dW` with a
//! terminal value at `T`. One backward step is
//!
//! ```text
//! yhat_k = E[Y_{k+1} | W_k]
//! Z_k    = E[(Y_{k+1} - yhat_k) dW_k | W_k] / dt
//! Y_k    = (yhat_k + (b_k Z_k + c_k) dt) / (1 - a_k dt)
//! ```
//!
//! with both conditional expectations fitted by least squares on a cubic in
//! `W_k`. Subtracting `yhat_k` before forming the `Z` regressand leaves its
//! conditional mean unchanged and removes most of its variance.

mod oracle;
mod riccati;

pub use oracle::{mn_oracle_measure_change, OracleEstimate};
pub use riccati::{
    assemble_p4, build_riccati_core, general_equilibrium, general_equilibrium_from,
    operator_alternative_form, solve_mn, solve_p3_phi_star, solve_phi_psi, P3Solution, RiccatiCore,
    RiccatiSolution,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::BrownianGrid;
use crate::process::{Node, Process};
use crate::regression::{fit, Basis};

/// Terminal condition of a backward equation.
#[derive(Clone, Debug, PartialEq)]
pub enum Terminal {
    Scalar(f64),
    Paths(Vec<f64>),
}

impl Terminal {
    fn node(&self) -> Node<'_> {
        match self {
            Terminal::Scalar(v) => Node::Scalar(*v),
            Terminal::Paths(v) => Node::Paths(v),
        }
    }
}

/// Generator `g(Y, Z) = a Y + b Z + c` and terminal value.
#[derive(Clone, Debug)]
pub struct LinearBsdeSpec {
    pub a: Process,
    pub b: Process,
    pub c: Process,
    pub terminal: Terminal,
}

impl LinearBsdeSpec {
    pub fn new(a: Process, b: Process, c: Process, terminal: Terminal) -> Self {
        LinearBsdeSpec { a, b, c, terminal }
    }

    /// Whether the solution is deterministic with `Z = 0`.
    fn is_deterministic(&self) -> bool {
        self.a.is_deterministic() && self.c.is_deterministic() && matches!(self.terminal, Terminal::Scalar(_))
    }
}

/// Solution of a backward equation on the grid.
#[derive(Clone, Debug)]
pub struct BsdePair {
    pub y: Process,
    pub z: Process,
    /// Root mean square of `Y_{k+1} - E[Y_{k+1} | W_k]` per step.
    pub residual_rms: Vec<f64>,
}

impl BsdePair {
    pub fn is_deterministic(&self) -> bool {
        self.y.is_deterministic() && self.z.is_deterministic()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveOptions {
    /// Use the exact scalar recursion when the solution is deterministic.
    pub deterministic_shortcut: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            deterministic_shortcut: true,
        }
    }
}

pub fn solve_linear_bsde(spec: &LinearBsdeSpec, grid: &BrownianGrid) -> Result<BsdePair> {
    solve_linear_bsde_with(spec, grid, SolveOptions::default())
}

pub fn solve_linear_bsde_with(spec: &LinearBsdeSpec, grid: &BrownianGrid, options: SolveOptions) -> Result<BsdePair> {
    grid.check_process(&spec.a, "driver a")?;
    grid.check_process(&spec.b, "driver b")?;
    grid.check_process(&spec.c, "driver c")?;
    if let Terminal::Paths(v) = &spec.terminal {
        if v.len() != grid.n_paths() {
            return Err(Error::GridMismatch(format!(
                "terminal has {} values, grid has {} paths",
                v.len(),
                grid.n_paths()
            )));
        }
    }
    if options.deterministic_shortcut && spec.is_deterministic() {
        solve_deterministic(spec, grid)
    } else {
        solve_by_regression(spec, grid)
    }
}

fn check_step(a: f64, dt: f64, step: usize) -> Result<f64> {
    let ad = a * dt;
    if ad.abs() >= 1.0 || !ad.is_finite() {
        return Err(Error::StepSizeTooLarge { step, value: ad.abs() });
    }
    Ok(1.0 - ad)
}

fn solve_deterministic(spec: &LinearBsdeSpec, grid: &BrownianGrid) -> Result<BsdePair> {
    let Terminal::Scalar(terminal) = spec.terminal else {
        unreachable!("deterministic solve needs a scalar terminal")
    };
    let n = grid.n_steps();
    let dt = grid.dt();
    let mut y = vec![0.0; n + 1];
    y[n] = terminal;
    for k in (0..n).rev() {
        let denom = check_step(spec.a.value(0, k), dt, k)?;
        y[k] = (y[k + 1] + spec.c.value(0, k) * dt) / denom;
        if !y[k].is_finite() {
            return Err(Error::NonFinite {
                what: "backward solution".into(),
                path: 0,
                step: k,
            });
        }
    }
    Ok(BsdePair {
        y: Process::Deterministic(y),
        z: Process::zeros(n + 1),
        residual_rms: vec![0.0; n],
    })
}

fn solve_by_regression(spec: &LinearBsdeSpec, grid: &BrownianGrid) -> Result<BsdePair> {
    let dt = grid.dt();
    for k in 0..grid.n_steps() {
        match spec.a.node(k) {
            Node::Scalar(a) => {
                check_step(a, dt, k)?;
            }
            Node::Paths(values) => {
                for a in values {
                    check_step(*a, dt, k)?;
                }
            }
        }
    }
    let (a, b, c) = (&spec.a, &spec.b, &spec.c);
    regress_backward(&spec.terminal, grid, |k, p, yhat, z| {
        let (a, b, c) = (a.value(p, k), b.value(p, k), c.value(p, k));
        (yhat + (b * z + c) * dt) / (1.0 - a * dt)
    })
}

/// Explicit scheme `Y_k = yhat_k + g(k, p, yhat_k, Z_k) dt` for a general
/// driver. Used only as an independent check on the linear constructions.
pub fn solve_bsde_explicit<G>(driver: G, terminal: &Terminal, grid: &BrownianGrid) -> Result<BsdePair>
where
    G: Fn(usize, usize, f64, f64) -> f64 + Sync,
{
    let dt = grid.dt();
    regress_backward(terminal, grid, |k, p, yhat, z| yhat + driver(k, p, yhat, z) * dt)
}

/// Backward induction shared by all regression solvers. `update(k, p, yhat,
/// z)` returns `Y_k` on path `p`.
fn regress_backward<U>(terminal: &Terminal, grid: &BrownianGrid, update: U) -> Result<BsdePair>
where
    U: Fn(usize, usize, f64, f64) -> f64 + Sync,
{
    let n_paths = grid.n_paths();
    let n = grid.n_steps();
    let dt = grid.dt();
    let mut ys = vec![0.0; (n + 1) * n_paths];
    let mut zs = vec![0.0; (n + 1) * n_paths];
    let mut residual_rms = vec![0.0; n];
    ys[n * n_paths..].copy_from_slice(&terminal.node().to_vec(n_paths));
    let mut target = vec![0.0; n_paths];
    for k in (0..n).rev() {
        let w = grid.w_at(k);
        let dw = grid.dw_at(k);
        let basis = Basis::at_time(grid.time(k));
        let (head, tail) = ys.split_at_mut((k + 1) * n_paths);
        let next = &tail[..n_paths];
        let cur = &mut head[k * n_paths..];
        let y_fit = fit(basis, w, next).ok_or(Error::SingularRegression { step: k })?;
        let yhat = y_fit.predict(w);
        target
            .par_iter_mut()
            .enumerate()
            .for_each(|(p, t)| *t = (next[p] - yhat[p]) * dw[p] / dt);
        let z_fit = fit(basis, w, &target).ok_or(Error::SingularRegression { step: k })?;
        let z_row = &mut zs[k * n_paths..(k + 1) * n_paths];
        z_row.par_iter_mut().enumerate().for_each(|(p, z)| *z = z_fit.evaluate(w[p]));
        cur.par_iter_mut()
            .enumerate()
            .for_each(|(p, y)| *y = update(k, p, yhat[p], z_row[p]));
        if let Some(p) = cur.iter().chain(z_row.iter()).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "backward solution".into(),
                path: p % n_paths,
                step: k,
            });
        }
        let sq: Vec<f64> = next.iter().zip(&yhat).map(|(y, m)| (y - m) * (y - m)).collect();
        residual_rms[k] = crate::stats::mean(&sq).sqrt();
    }
    let (body, last) = zs.split_at_mut(n * n_paths);
    last.copy_from_slice(&body[(n - 1) * n_paths..]);
    Ok(BsdePair {
        y: Process::Stochastic { n_paths, values: ys },
        z: Process::Stochastic { n_paths, values: zs },
        residual_rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::simulate_brownian;

    fn consts(a: f64, b: f64, c: f64, nodes: usize) -> (Process, Process, Process) {
        (
            Process::constant(a, nodes),
            Process::constant(b, nodes),
            Process::constant(c, nodes),
        )
    }

    #[test]
    fn constant_martingale() {
        let g = simulate_brownian(100, 10, 1.0, 1).unwrap();
        let (a, b, c) = consts(0.0, 0.0, 0.0, 11);
        let spec = LinearBsdeSpec::new(a, b, c, Terminal::Scalar(2.5));
        for shortcut in [true, false] {
            let s = solve_linear_bsde_with(&spec, &g, SolveOptions { deterministic_shortcut: shortcut }).unwrap();
            for k in 0..=10 {
                for p in 0..100 {
                    assert_eq!(s.y.value(p, k), 2.5);
                    assert_eq!(s.z.value(p, k), 0.0);
                }
            }
        }
    }

    #[test]
    fn discounting_matches_the_scalar_ode() {
        let g = simulate_brownian(10, 200, 1.0, 1).unwrap();
        let (a, b, c) = consts(0.03, 0.4, 0.0, 201);
        let s = solve_linear_bsde(&LinearBsdeSpec::new(a, b, c, Terminal::Scalar(1.5)), &g).unwrap();
        assert!(s.is_deterministic());
        let exact = 1.5 * 0.03_f64.exp();
        assert!((s.y.value(0, 0) - exact).abs() / exact < 1e-4);
    }

    #[test]
    fn regression_path_agrees_with_shortcut() {
        let g = simulate_brownian(500, 50, 1.0, 4).unwrap();
        let spec = LinearBsdeSpec::new(
            Process::Deterministic((0..51).map(|k| 0.02 + 0.001 * k as f64).collect()),
            Process::constant(0.3, 51),
            Process::constant(-0.1, 51),
            Terminal::Scalar(-1.0),
        );
        let fast = solve_linear_bsde(&spec, &g).unwrap();
        let slow = solve_linear_bsde_with(&spec, &g, SolveOptions { deterministic_shortcut: false }).unwrap();
        assert!(fast.y.max_abs_diff(&slow.y).unwrap() < 1e-12);
        assert!(slow.z.sup_abs() < 1e-12);
    }

    #[test]
    fn brownian_terminal_is_its_own_representation() {
        let g = simulate_brownian(2000, 20, 1.0, 8).unwrap();
        let (a, b, c) = consts(0.0, 0.0, 0.0, 21);
        let terminal = Terminal::Paths(g.w_at(20).to_vec());
        let s = solve_linear_bsde(&LinearBsdeSpec::new(a, b, c, terminal), &g).unwrap();
        for k in 0..=20 {
            let sq: Vec<f64> = (0..2000).map(|p| (s.y.value(p, k) - g.w(p, k)).powi(2)).collect();
            assert!(crate::stats::mean(&sq).sqrt() < 0.05, "step {k}");
        }
        for k in 0..20 {
            let zbar = s.z.mean_at(k);
            assert!((zbar - 1.0).abs() < 0.1, "step {k}: {zbar}");
        }
        assert_eq!(s.y.node(20).to_vec(2000), g.w_at(20));
    }

    #[test]
    fn large_steps_are_rejected() {
        let g = simulate_brownian(10, 2, 1.0, 1).unwrap();
        let (a, b, c) = consts(3.0, 0.0, 0.0, 3);
        let err = solve_linear_bsde(&LinearBsdeSpec::new(a, b, c, Terminal::Scalar(1.0)), &g).unwrap_err();
        assert!(matches!(err, Error::StepSizeTooLarge { step: 1, .. }));
    }
}
