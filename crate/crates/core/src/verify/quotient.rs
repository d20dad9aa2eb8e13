use std::fmt;

use super::objective::{cell_estimates, conditional_mean, CellEstimate, Objective};
use crate::error::{Error, Result};
use crate::market::{terminal_values, BrownianGrid, CoefficientPaths, PerturbationAmount, PerturbationSpec};
use crate::operator::EquilibriumOperator;

/// Default duration ladder, as fractions of the horizon.
pub const EPSILON_LADDER: [f64; 3] = [0.1, 0.05, 0.025];

/// Pass threshold in standard errors.
pub const PASS_SIGMAS: f64 = 3.0;

/// Threshold a mis-specified operator must cross to count as rejected.
pub const POWER_SIGMAS: f64 = 5.0;

/// A spike perturbation at node `step`, before choosing its duration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub step: usize,
    pub amount: PerturbationAmount,
}

impl Probe {
    /// Probes at `t in {0, T/4, T/2}` with constant amounts
    /// `v in {+-0.1, +-1, +-5}`.
    pub fn default_set(grid: &BrownianGrid) -> Vec<Probe> {
        let horizon = grid.horizon();
        let mut out = Vec::new();
        for t in [0.0, 0.25 * horizon, 0.5 * horizon] {
            for v in [0.1, -0.1, 1.0, -1.0, 5.0, -5.0] {
                out.push(Probe {
                    step: grid.step_of(t),
                    amount: PerturbationAmount::Constant(v),
                });
            }
        }
        out
    }
}

/// Conditional estimates at one duration, or extrapolated to zero duration.
#[derive(Clone, Debug)]
pub struct QuotientTerms {
    /// `None` for the extrapolated row.
    pub epsilon: Option<f64>,
    pub first: Vec<CellEstimate>,
    pub second: Vec<CellEstimate>,
    pub total: Vec<CellEstimate>,
}

#[derive(Clone, Debug)]
pub struct QuotientReport {
    pub t: f64,
    pub probe: Probe,
    pub ladder: Vec<QuotientTerms>,
    pub extrapolated: QuotientTerms,
}

impl QuotientReport {
    /// Smallest z-score of the extrapolated total over the cells.
    pub fn min_total_z(&self) -> f64 {
        self.extrapolated
            .total
            .iter()
            .map(CellEstimate::z_score)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest `|z|` of the extrapolated first-order term over the cells.
    pub fn max_first_abs_z(&self) -> f64 {
        self.extrapolated
            .first
            .iter()
            .map(|c| c.z_score().abs())
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.min_total_z() >= -PASS_SIGMAS && self.max_first_abs_z() <= PASS_SIGMAS
    }
}

/// Weights `w_i` with `sum w_i f(x_i)` the least-squares intercept of a line
/// through `(x_i, f(x_i))`.
pub fn intercept_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    if x.len() == 1 {
        return vec![1.0];
    }
    let mean = x.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    x.iter().map(|v| 1.0 / n - mean * (v - mean) / sxx).collect()
}

/// Per-path integrands of the first- and second-order terms.
fn integrands(
    objective: Objective<'_>,
    centered: &[f64],
    x1: &[f64],
    eps: f64,
    grid: &BrownianGrid,
    step: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m1 = conditional_mean(x1, grid, step)?;
    let first = match objective {
        Objective::MeanVariance { gamma } => centered
            .iter()
            .zip(x1)
            .map(|(c, d)| (2.0 * c - gamma) * d / eps)
            .collect(),
        Objective::Hedging { .. } => centered.iter().zip(x1).map(|(c, d)| 2.0 * c * d / eps).collect(),
    };
    let second = x1.iter().zip(&m1).map(|(d, m)| (d - m) * (d - m) / eps).collect();
    Ok((first, second))
}

fn terms(epsilon: Option<f64>, first: &[f64], second: &[f64], grid: &BrownianGrid, step: usize) -> Result<QuotientTerms> {
    let total: Vec<f64> = first.iter().zip(second).map(|(a, b)| a + b).collect();
    Ok(QuotientTerms {
        epsilon,
        first: cell_estimates(first, grid, step)?,
        second: cell_estimates(second, grid, step)?,
        total: cell_estimates(&total, grid, step)?,
    })
}

/// Runs every probe over the duration ladder (fractions of the horizon) on
/// common noise, one forward pass for all of them.
pub fn verify_operator(
    coeffs: &CoefficientPaths,
    operator: &EquilibriumOperator,
    objective: Objective<'_>,
    x0: f64,
    probes: &[Probe],
    ladder: &[f64],
    grid: &BrownianGrid,
) -> Result<Vec<QuotientReport>> {
    if ladder.is_empty() {
        return Err(Error::InvalidArgument("empty duration ladder".into()));
    }
    if let Objective::Hedging { claim } = objective {
        if claim.len() != grid.n_paths() {
            return Err(Error::GridMismatch(format!(
                "{} claim values vs {} paths",
                claim.len(),
                grid.n_paths()
            )));
        }
    }
    let mut perts = Vec::with_capacity(probes.len() * ladder.len());
    for p in probes {
        for &frac in ladder {
            perts.push(PerturbationSpec::new(grid, grid.time(p.step), frac * grid.horizon(), p.amount)?);
        }
    }
    let (x_star, x1s) = terminal_values(coeffs, operator, x0, &perts, grid)?;
    let error: Vec<f64> = match objective {
        Objective::MeanVariance { .. } => x_star.clone(),
        Objective::Hedging { claim } => x_star.iter().zip(claim).map(|(x, c)| x - c).collect(),
    };

    let mut reports = Vec::with_capacity(probes.len());
    for (i, probe) in probes.iter().enumerate() {
        let step = probe.step;
        let m = conditional_mean(&error, grid, step)?;
        let centered: Vec<f64> = error.iter().zip(&m).map(|(e, m)| e - m).collect();
        let specs = &perts[i * ladder.len()..(i + 1) * ladder.len()];
        let eps: Vec<f64> = specs.iter().map(|s| s.epsilon(grid)).collect();
        let weights = intercept_weights(&eps);
        let n = grid.n_paths();
        let (mut ext_first, mut ext_second) = (vec![0.0; n], vec![0.0; n]);
        let mut rows = Vec::with_capacity(ladder.len());
        for (j, (&e, &w)) in eps.iter().zip(&weights).enumerate() {
            let (first, second) = integrands(objective, &centered, &x1s[i * ladder.len() + j], e, grid, step)?;
            for p in 0..n {
                ext_first[p] += w * first[p];
                ext_second[p] += w * second[p];
            }
            rows.push(terms(Some(e), &first, &second, grid, step)?);
        }
        reports.push(QuotientReport {
            t: grid.time(step),
            probe: *probe,
            ladder: rows,
            extrapolated: terms(None, &ext_first, &ext_second, grid, step)?,
        });
    }
    Ok(reports)
}

/// A single probe of [`verify_operator`].
pub fn perturbation_quotient(
    coeffs: &CoefficientPaths,
    operator: &EquilibriumOperator,
    objective: Objective<'_>,
    x0: f64,
    probe: Probe,
    ladder: &[f64],
    grid: &BrownianGrid,
) -> Result<QuotientReport> {
    let mut r = verify_operator(coeffs, operator, objective, x0, &[probe], ladder, grid)?;
    Ok(r.remove(0))
}

#[derive(Clone, Debug)]
pub struct VerificationReport {
    pub reports: Vec<QuotientReport>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(QuotientReport::passed)
    }

    pub fn min_total_z(&self) -> f64 {
        self.reports
            .iter()
            .map(QuotientReport::min_total_z)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct PowerReport {
    pub factor: f64,
    pub reports: Vec<QuotientReport>,
    pub min_z: f64,
}

impl PowerReport {
    pub fn rejected(&self) -> bool {
        self.min_z < -POWER_SIGMAS
    }
}

/// Re-runs the probes with `phi` scaled by `factor`; a useful verifier
/// rejects the mis-scaled operator.
#[allow(clippy::too_many_arguments)]
pub fn power_check(
    coeffs: &CoefficientPaths,
    operator: &EquilibriumOperator,
    objective: Objective<'_>,
    x0: f64,
    probes: &[Probe],
    ladder: &[f64],
    grid: &BrownianGrid,
    factor: f64,
) -> Result<PowerReport> {
    let wrong = operator.with_scaled_phi(factor);
    let reports = verify_operator(coeffs, &wrong, objective, x0, probes, ladder, grid)?;
    let min_z = reports
        .iter()
        .map(QuotientReport::min_total_z)
        .fold(f64::INFINITY, f64::min);
    Ok(PowerReport {
        factor,
        reports,
        min_z,
    })
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>8} {:>10} {:>9} {:>13} {:>11} {:>13} {:>11} {:>8}",
            "t", "v", "w", "first", "first_se", "total", "total_se", "verdict"
        )?;
        for r in &self.reports {
            let v = match r.probe.amount {
                PerturbationAmount::Constant(c) => format!("{c}"),
                PerturbationAmount::ClampedBrownian { scale, cap } => format!("{scale}*W|{cap}"),
            };
            for (a, b) in r.extrapolated.first.iter().zip(&r.extrapolated.total) {
                writeln!(
                    f,
                    "{:>8.4} {:>10} {:>9.4} {:>13.6e} {:>11.3e} {:>13.6e} {:>11.3e} {:>8}",
                    r.t,
                    v,
                    a.w,
                    a.value,
                    a.se,
                    b.value,
                    b.se,
                    if r.passed() { "pass" } else { "FAIL" }
                )?;
            }
        }
        Ok(())
    }
}
