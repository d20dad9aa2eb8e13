//! Small sample-statistics helpers with a fixed summation order.

use rayon::prelude::*;

/// Chunk length for parallel reductions. Partial sums are combined in chunk
/// order, so results do not depend on the thread count.
pub(crate) const CHUNK: usize = 4096;

/// Sum in fixed chunk order.
pub fn sum(values: &[f64]) -> f64 {
    values
        .par_chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

/// Sample mean, shifted by the first element so that constant samples return
/// that constant exactly.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let pivot = values[0];
    let shifted: f64 = values
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|v| v - pivot).sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    pivot + shifted / values.len() as f64
}

/// Population variance `mean((x - mean)^2)`.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: f64 = values
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|v| (v - m) * (v - m)).sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    ss / values.len() as f64
}

/// Mean and its standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = mean(values);
    if values.len() < 2 {
        return (m, f64::NAN);
    }
    let ss: f64 = values
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|v| (v - m) * (v - m)).sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    (m, (ss / (n - 1.0)).sqrt() / n.sqrt())
}
