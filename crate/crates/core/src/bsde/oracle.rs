use std::f64::consts::SQRT_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::MarketScenario;
use crate::stats::{mean_se, CHUNK};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleEstimate {
    pub mean: f64,
    pub se: f64,
}

/// Estimates `M(t_k)` given `W(t_k) = w` through
/// `M(t) = -sqrt(2) E_t[rho(t, T) exp(-int_t^T r ds)]`, with `rho` the
/// stochastic exponential of `-int theta dW`. Forward simulation only, on
/// the same uniform grid of `n_steps` steps.
pub fn mn_oracle_measure_change(
    scenario: &MarketScenario,
    n_steps: usize,
    step: usize,
    w: f64,
    inner_paths: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    if step > n_steps || n_steps == 0 || inner_paths < 2 {
        return Err(Error::InvalidArgument(format!(
            "oracle needs step <= n_steps, n_steps >= 1 and at least two paths (got {step}, {n_steps}, {inner_paths})"
        )));
    }
    if step == n_steps {
        return Ok(OracleEstimate {
            mean: -SQRT_2,
            se: 0.0,
        });
    }
    let horizon = scenario.horizon();
    let dt = horizon / n_steps as f64;
    let sd = dt.sqrt();
    let n_chunks = inner_paths.div_ceil(CHUNK);
    let samples: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let len = CHUNK.min(inner_paths - chunk * CHUNK);
            (0..len)
                .map(|_| {
                    let mut wk = w;
                    let mut log_weight = 0.0;
                    for k in step..n_steps {
                        let t = k as f64 * dt;
                        let r = scenario.r(t, wk);
                        let theta = scenario.theta(t, wk);
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let dw = sd * z;
                        log_weight += -theta * dw - 0.5 * theta * theta * dt - r * dt;
                        wk += dw;
                    }
                    -SQRT_2 * log_weight.exp()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let (mean, se) = mean_se(&samples);
    Ok(OracleEstimate { mean, se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{build_scenario, CoefficientSpec, ScenarioConfig};

    fn scenario(r: f64, b: f64) -> MarketScenario {
        build_scenario(ScenarioConfig {
            r: CoefficientSpec::constant(r),
            b: CoefficientSpec::constant(b),
            sigma: CoefficientSpec::constant(0.2),
            horizon: 1.0,
            sigma_floor: 1e-4,
            claim: None,
        })
        .unwrap()
    }

    #[test]
    fn zero_rate_and_premium_is_exact() {
        let e = mn_oracle_measure_change(&scenario(0.0, 0.0), 20, 0, 0.0, 100, 1).unwrap();
        assert!((e.mean + SQRT_2).abs() < 1e-15);
        assert!(e.se < 1e-15);
    }

    #[test]
    fn terminal_node_has_no_variance() {
        let e = mn_oracle_measure_change(&scenario(0.03, 0.08), 20, 20, 0.3, 100, 1).unwrap();
        assert_eq!(e, OracleEstimate { mean: -SQRT_2, se: 0.0 });
    }

    #[test]
    fn deterministic_rate_matches_discounting() {
        let e = mn_oracle_measure_change(&scenario(0.03, 0.08), 50, 0, 0.0, 20000, 2).unwrap();
        let exact = -SQRT_2 * (-0.03_f64).exp();
        assert!((e.mean - exact).abs() < 3.0 * e.se + 1e-4, "{e:?} vs {exact}");
    }
}
