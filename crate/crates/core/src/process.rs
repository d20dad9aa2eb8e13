//! Grid-valued processes.
//!
//! A [`Process`] holds one value per (path, node) of the shared time grid.
//! Processes that do not depend on the Brownian path are stored once per
//! node, which keeps deterministic scenarios cheap at large path counts.
//! Stochastic values are laid out step-major so that each node's
//! cross-section is a contiguous slice, the access pattern of backward
//! regression.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Process {
    /// One value per node, shared by every path.
    Deterministic(Vec<f64>),
    /// `values[step * n_paths + path]`.
    Stochastic { n_paths: usize, values: Vec<f64> },
}

/// Cross-section of a process at one node.
#[derive(Clone, Copy, Debug)]
pub enum Node<'a> {
    Scalar(f64),
    Paths(&'a [f64]),
}

impl Node<'_> {
    #[inline]
    pub fn get(&self, path: usize) -> f64 {
        match self {
            Node::Scalar(v) => *v,
            Node::Paths(values) => values[path],
        }
    }

    pub fn to_vec(&self, n_paths: usize) -> Vec<f64> {
        match self {
            Node::Scalar(v) => vec![*v; n_paths],
            Node::Paths(values) => values.to_vec(),
        }
    }
}

impl Process {
    pub fn constant(value: f64, n_nodes: usize) -> Self {
        Process::Deterministic(vec![value; n_nodes])
    }

    pub fn zeros(n_nodes: usize) -> Self {
        Self::constant(0.0, n_nodes)
    }

    /// Builds a stochastic process from step-major values.
    pub fn from_step_major(n_paths: usize, values: Vec<f64>) -> Result<Self> {
        if n_paths == 0 || !values.len().is_multiple_of(n_paths) {
            return Err(Error::InvalidArgument(format!(
                "{} values do not split into {} paths",
                values.len(),
                n_paths
            )));
        }
        Ok(Process::Stochastic { n_paths, values })
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            Process::Deterministic(v) => v.len(),
            Process::Stochastic { n_paths, values } => values.len() / n_paths,
        }
    }

    /// Number of stored paths, `None` for deterministic processes.
    pub fn n_paths(&self) -> Option<usize> {
        match self {
            Process::Deterministic(_) => None,
            Process::Stochastic { n_paths, .. } => Some(*n_paths),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Process::Deterministic(_))
    }

    #[inline]
    pub fn value(&self, path: usize, step: usize) -> f64 {
        match self {
            Process::Deterministic(v) => v[step],
            Process::Stochastic { n_paths, values } => values[step * n_paths + path],
        }
    }

    #[inline]
    pub fn node(&self, step: usize) -> Node<'_> {
        match self {
            Process::Deterministic(v) => Node::Scalar(v[step]),
            Process::Stochastic { n_paths, values } => {
                Node::Paths(&values[step * n_paths..(step + 1) * n_paths])
            }
        }
    }

    /// Largest absolute value over all paths and nodes.
    pub fn sup_abs(&self) -> f64 {
        let values = match self {
            Process::Deterministic(v) => v,
            Process::Stochastic { values, .. } => values,
        };
        values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Smallest value over all paths and nodes.
    pub fn min(&self) -> f64 {
        let values = match self {
            Process::Deterministic(v) => v,
            Process::Stochastic { values, .. } => values,
        };
        values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute value at one node.
    pub fn sup_abs_at(&self, step: usize) -> f64 {
        match self.node(step) {
            Node::Scalar(v) => v.abs(),
            Node::Paths(values) => values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())),
        }
    }

    /// Cross-sectional mean at one node.
    pub fn mean_at(&self, step: usize) -> f64 {
        match self.node(step) {
            Node::Scalar(v) => v,
            Node::Paths(values) => crate::stats::mean(values),
        }
    }

    pub fn map<F>(&self, f: F) -> Process
    where
        F: Fn(f64) -> f64 + Sync,
    {
        match self {
            Process::Deterministic(v) => Process::Deterministic(v.iter().map(|x| f(*x)).collect()),
            Process::Stochastic { n_paths, values } => Process::Stochastic {
                n_paths: *n_paths,
                values: values.par_iter().map(|x| f(*x)).collect(),
            },
        }
    }

    /// Node-wise combination of `K` processes.
    ///
    /// The result is deterministic iff every input is. All stochastic inputs
    /// must share the same path count and every input the same node count.
    pub fn combine<const K: usize, F>(inputs: [&Process; K], f: F) -> Result<Process>
    where
        F: Fn([f64; K]) -> f64 + Sync,
    {
        let n_nodes = inputs.first().map_or(0, |p| p.n_nodes());
        let mut n_paths = None;
        for p in inputs.iter() {
            if p.n_nodes() != n_nodes {
                return Err(Error::GridMismatch(format!(
                    "node counts {} and {}",
                    n_nodes,
                    p.n_nodes()
                )));
            }
            if let Some(n) = p.n_paths() {
                match n_paths {
                    None => n_paths = Some(n),
                    Some(m) if m != n => {
                        return Err(Error::GridMismatch(format!("path counts {m} and {n}")))
                    }
                    _ => {}
                }
            }
        }
        match n_paths {
            None => Ok(Process::Deterministic(
                (0..n_nodes)
                    .map(|k| f(inputs.map(|p| p.value(0, k))))
                    .collect(),
            )),
            Some(n_paths) => {
                let mut values = vec![0.0; n_nodes * n_paths];
                values
                    .par_chunks_mut(n_paths)
                    .enumerate()
                    .for_each(|(k, out)| {
                        let nodes = inputs.map(|p| p.node(k));
                        for (path, slot) in out.iter_mut().enumerate() {
                            *slot = f(nodes.map(|n| n.get(path)));
                        }
                    });
                Ok(Process::Stochastic { n_paths, values })
            }
        }
    }

    /// `sup |self - other|` over all paths and nodes.
    pub fn max_abs_diff(&self, other: &Process) -> Result<f64> {
        Ok(Process::combine([self, other], |[a, b]| a - b)?.sup_abs())
    }

    /// Materialises a deterministic process over `n_paths` identical paths.
    pub fn into_stochastic(self, n_paths: usize) -> Process {
        match self {
            Process::Deterministic(v) => {
                let mut values = Vec::with_capacity(v.len() * n_paths);
                for x in v {
                    values.extend(std::iter::repeat_n(x, n_paths));
                }
                Process::Stochastic { n_paths, values }
            }
            s => s,
        }
    }

    /// Values of one path across all nodes.
    pub fn path(&self, path: usize) -> Vec<f64> {
        (0..self.n_nodes()).map(|k| self.value(path, k)).collect()
    }

    pub fn all_finite(&self) -> bool {
        match self {
            Process::Deterministic(v) => v.iter().all(|x| x.is_finite()),
            Process::Stochastic { values, .. } => values.iter().all(|x| x.is_finite()),
        }
    }
}
