use crate::error::{Error, Result};
use crate::market::BrownianGrid;
use crate::regression::{fit, fit_with_se, Basis, Fit};

/// Value of a conditional estimate at one conditioning cell `W_t = w`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellEstimate {
    pub w: f64,
    pub value: f64,
    pub se: f64,
}

impl CellEstimate {
    /// `value / se`, infinite in sign when `se` is zero and `value` is not.
    pub fn z_score(&self) -> f64 {
        if self.se > 0.0 {
            self.value / self.se
        } else if self.value == 0.0 {
            0.0
        } else {
            self.value.signum() * f64::INFINITY
        }
    }
}

/// Conditioning cells for node `step`: `W_t in {-1, 0, 1} sqrt(t)`, or the
/// single unconditional cell at `t = 0`.
pub fn conditioning_cells(grid: &BrownianGrid, step: usize) -> Vec<f64> {
    let t = grid.time(step);
    if step == 0 || t <= 0.0 {
        vec![0.0]
    } else {
        let s = t.sqrt();
        vec![-s, 0.0, s]
    }
}

pub(crate) fn conditional_fit(values: &[f64], grid: &BrownianGrid, step: usize) -> Result<Fit> {
    fit(Basis::at_time(grid.time(step)), grid.w_at(step), values).ok_or(Error::SingularRegression { step })
}

/// Per-path `E[values | W_t]`.
pub(crate) fn conditional_mean(values: &[f64], grid: &BrownianGrid, step: usize) -> Result<Vec<f64>> {
    Ok(conditional_fit(values, grid, step)?.predict(grid.w_at(step)))
}

/// Fits `E[values | W_t]` with standard errors and evaluates it at the
/// conditioning cells.
pub fn cell_estimates(values: &[f64], grid: &BrownianGrid, step: usize) -> Result<Vec<CellEstimate>> {
    let f = fit_with_se(Basis::at_time(grid.time(step)), grid.w_at(step), values)
        .ok_or(Error::SingularRegression { step })?;
    Ok(conditioning_cells(grid, step)
        .into_iter()
        .map(|w| CellEstimate {
            w,
            value: f.evaluate(w),
            se: f.standard_error(w).unwrap_or(0.0),
        })
        .collect())
}

/// Which objective is evaluated at the terminal time.
#[derive(Clone, Copy, Debug)]
pub enum Objective<'a> {
    /// `Var_t[X(T)] - gamma E_t[X(T)]`
    MeanVariance { gamma: f64 },
    /// `Var_t[xi - X(T)]`, with `xi` given per path.
    Hedging { claim: &'a [f64] },
}

/// Conditional objective at node `step`, per conditioning cell. Fails with
/// `InsufficientPaths` when a standard error exceeds `max_se`.
pub fn evaluate_objective(
    objective: Objective<'_>,
    terminal: &[f64],
    grid: &BrownianGrid,
    step: usize,
    max_se: Option<f64>,
) -> Result<Vec<CellEstimate>> {
    let scores: Vec<f64> = match objective {
        Objective::MeanVariance { gamma } => {
            let m = conditional_mean(terminal, grid, step)?;
            terminal
                .iter()
                .zip(&m)
                .map(|(x, m)| (x - m) * (x - m) - gamma * x)
                .collect()
        }
        Objective::Hedging { claim } => {
            if claim.len() != terminal.len() {
                return Err(Error::GridMismatch(format!(
                    "{} claim values vs {} wealth values",
                    claim.len(),
                    terminal.len()
                )));
            }
            let e: Vec<f64> = claim.iter().zip(terminal).map(|(c, x)| c - x).collect();
            let m = conditional_mean(&e, grid, step)?;
            e.iter().zip(&m).map(|(e, m)| (e - m) * (e - m)).collect()
        }
    };
    let cells = cell_estimates(&scores, grid, step)?;
    if let Some(requested) = max_se {
        if let Some(c) = cells.iter().find(|c| c.se > requested) {
            return Err(Error::InsufficientPaths { se: c.se, requested });
        }
    }
    Ok(cells)
}
