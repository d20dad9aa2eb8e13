use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::process::Process;

/// Seeded ensemble of discretised Brownian paths on a uniform grid.
///
/// Increments of step `k` are drawn from their own ChaCha stream (`stream =
/// k`), path by path, so the ensemble is reproducible for any thread count
/// and enlarging `n_paths` leaves existing paths untouched.
#[derive(Clone, Debug)]
pub struct BrownianGrid {
    n_paths: usize,
    n_steps: usize,
    horizon: f64,
    seed: u64,
    times: Vec<f64>,
    /// `dw[k * n_paths + p]`, `k < n_steps`
    dw: Vec<f64>,
    /// `w[k * n_paths + p]`, `k <= n_steps`
    w: Vec<f64>,
}

pub fn simulate_brownian(n_paths: usize, n_steps: usize, horizon: f64, seed: u64) -> Result<BrownianGrid> {
    if n_paths == 0 || n_steps == 0 {
        return Err(Error::InvalidArgument(
            "need at least one path and one step".into(),
        ));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let dt = horizon / n_steps as f64;
    let mut dw = vec![0.0; n_steps * n_paths];
    draw_increments(&mut dw, n_paths, 0, dt, seed);
    let w = accumulate(&dw, n_paths, n_steps);
    let times = (0..=n_steps)
        .map(|k| if k == n_steps { horizon } else { k as f64 * dt })
        .collect();
    Ok(BrownianGrid {
        n_paths,
        n_steps,
        horizon,
        seed,
        times,
        dw,
        w,
    })
}

fn draw_increments(dw: &mut [f64], n_paths: usize, first_step: usize, dt: f64, seed: u64) {
    let sd = dt.sqrt();
    dw.par_chunks_mut(n_paths).enumerate().for_each(|(j, out)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((first_step + j) as u64);
        for slot in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *slot = sd * z;
        }
    });
}

fn accumulate(dw: &[f64], n_paths: usize, n_steps: usize) -> Vec<f64> {
    let mut w = vec![0.0; (n_steps + 1) * n_paths];
    for k in 0..n_steps {
        let (done, rest) = w.split_at_mut((k + 1) * n_paths);
        let prev = &done[k * n_paths..];
        let next = &mut rest[..n_paths];
        let inc = &dw[k * n_paths..(k + 1) * n_paths];
        for p in 0..n_paths {
            next[p] = prev[p] + inc[p];
        }
    }
    w
}

impl BrownianGrid {
    /// Copy of the grid whose increments from `step` onwards are redrawn
    /// from `seed`. Nodes `0..=step` are unchanged. The copy reports seed
    /// `u64::MAX` since no single seed reproduces it.
    pub fn resample_from(&self, step: usize, seed: u64) -> BrownianGrid {
        let mut dw = self.dw.clone();
        let start = step.min(self.n_steps) * self.n_paths;
        draw_increments(&mut dw[start..], self.n_paths, step, self.dt(), seed);
        let w = accumulate(&dw, self.n_paths, self.n_steps);
        BrownianGrid {
            dw,
            w,
            seed: u64::MAX,
            ..self.clone()
        }
    }


    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, step: usize) -> f64 {
        self.times[step]
    }

    /// `W(t_k)` across paths.
    pub fn w_at(&self, step: usize) -> &[f64] {
        &self.w[step * self.n_paths..(step + 1) * self.n_paths]
    }

    /// `W(t_{k+1}) - W(t_k)` across paths.
    pub fn dw_at(&self, step: usize) -> &[f64] {
        &self.dw[step * self.n_paths..(step + 1) * self.n_paths]
    }

    pub fn w(&self, path: usize, step: usize) -> f64 {
        self.w[step * self.n_paths + path]
    }

    pub fn dw(&self, path: usize, step: usize) -> f64 {
        self.dw[step * self.n_paths + path]
    }

    /// The Brownian motion itself as a grid process.
    pub fn w_process(&self) -> Process {
        Process::Stochastic {
            n_paths: self.n_paths,
            values: self.w.clone(),
        }
    }

    /// Nearest grid node to time `t`.
    pub fn step_of(&self, t: f64) -> usize {
        ((t / self.dt()).round() as usize).min(self.n_steps)
    }

    /// Whether `other` carries the same paths on the same nodes.
    pub fn same_as(&self, other: &BrownianGrid) -> bool {
        self.n_paths == other.n_paths
            && self.n_steps == other.n_steps
            && self.horizon == other.horizon
            && self.seed == other.seed
    }

    pub(crate) fn check_process(&self, p: &Process, what: &str) -> Result<()> {
        if p.n_nodes() != self.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "{what} has {} nodes, grid has {}",
                p.n_nodes(),
                self.n_nodes()
            )));
        }
        if let Some(n) = p.n_paths() {
            if n != self.n_paths {
                return Err(Error::GridMismatch(format!(
                    "{what} has {n} paths, grid has {}",
                    self.n_paths
                )));
            }
        }
        Ok(())
    }
}
