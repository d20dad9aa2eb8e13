mod common;

use closedloop::bsde::{general_equilibrium, solve_linear_bsde, LinearBsdeSpec, Terminal};
use closedloop::hedging::claim_processes;
use closedloop::market::{
    evaluate_coefficients, simulate_brownian, simulate_perturbed_pair, simulate_state, BoundedMap, ClaimSpec,
    CoefficientSpec, Control, Payoff, PerturbationAmount, PerturbationSpec,
};
use closedloop::mean_variance::{mv_closed_form_deterministic, solve_mv_equilibrium};
use closedloop::regression::{fit, Basis, CLAMP};
use closedloop::verify::{intercept_weights, perturbation_quotient, Objective, Probe};
use closedloop::{EquilibriumOperator, Process, Provenance};
use proptest::prelude::*;

fn random_rate(level: f64, amplitude: f64) -> CoefficientSpec {
    CoefficientSpec::brownian(
        BoundedMap::Tanh {
            level,
            amplitude,
            rate: 1.0,
        },
        level.abs() + amplitude.abs(),
    )
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn same_seed_same_increments(seed in any::<u64>(), paths in 2usize..40, steps in 1usize..30) {
        let a = simulate_brownian(paths, steps, 1.0, seed).unwrap();
        let b = simulate_brownian(paths, steps, 1.0, seed).unwrap();
        prop_assert!(a.same_as(&b));
        prop_assert_eq!(a.w_process(), b.w_process());
    }

    #[test]
    fn coefficients_and_wealth_are_adapted(seed in any::<u64>(), other in any::<u64>(), step in 0usize..20) {
        let s = common::with_coefficients(
            random_rate(0.02, 0.02),
            random_rate(0.08, 0.03),
            CoefficientSpec::brownian(BoundedMap::Sine { level: 0.2, amplitude: 0.05, frequency: 1.5 }, 0.3),
        );
        let g = simulate_brownian(64, 20, 1.0, seed).unwrap();
        let h = g.resample_from(step, other);
        let (ca, cb) = (evaluate_coefficients(&s, &g).unwrap(), evaluate_coefficients(&s, &h).unwrap());
        let op = EquilibriumOperator::new(g.w_process().map(|w| 0.1 * w.tanh()), Process::constant(0.4, 21), Provenance::External);
        let zero = Process::zeros(21);
        let xa = simulate_state(&ca, Control::Feedback(&op), 1.0, &zero, &zero, &g).unwrap().x;
        let opb = EquilibriumOperator::new(h.w_process().map(|w| 0.1 * w.tanh()), Process::constant(0.4, 21), Provenance::External);
        let xb = simulate_state(&cb, Control::Feedback(&opb), 1.0, &zero, &zero, &h).unwrap().x;
        for k in 0..=step {
            for p in 0..64 {
                prop_assert_eq!(ca.r.value(p, k), cb.r.value(p, k));
                prop_assert_eq!(ca.sigma.value(p, k), cb.sigma.value(p, k));
                prop_assert_eq!(xa.value(p, k), xb.value(p, k));
            }
        }
    }

    #[test]
    fn perturbation_difference_is_exact(seed in any::<u64>(), v in -5.0f64..5.0, start in 0usize..15, len in 1usize..5) {
        let s = common::with_coefficients(random_rate(0.02, 0.02), CoefficientSpec::constant(0.08), CoefficientSpec::constant(0.2));
        let g = simulate_brownian(32, 20, 1.0, seed).unwrap();
        let c = evaluate_coefficients(&s, &g).unwrap();
        let op = EquilibriumOperator::new(g.w_process().map(|w| -0.05 * w), Process::constant(0.3, 21), Provenance::External);
        let pert = PerturbationSpec::from_steps(start, len, PerturbationAmount::Constant(v), 20).unwrap();
        let (star, pert_x, diff) = simulate_perturbed_pair(&c, &op, 1.0, &pert, &g).unwrap();
        for k in 0..21 {
            for p in 0..32 {
                let gap = pert_x.x.value(p, k) - star.x.value(p, k) - diff.x.value(p, k);
                let scale = pert_x.x.value(p, k).abs().max(1.0);
                prop_assert!(gap.abs() <= 8.0 * f64::EPSILON * scale, "gap {gap} at {p},{k}");
            }
        }
    }

    #[test]
    fn zero_control_paths_coincide(r in -0.05f64..0.1, seed in any::<u64>()) {
        let s = common::with_coefficients(CoefficientSpec::constant(r), random_rate(0.08, 0.02), CoefficientSpec::constant(0.2));
        let g = simulate_brownian(16, 10, 1.0, seed).unwrap();
        let c = evaluate_coefficients(&s, &g).unwrap();
        let zero = Process::zeros(11);
        let x = simulate_state(&c, Control::Explicit(&zero), 2.0, &zero, &zero, &g).unwrap().x;
        for k in 0..11 {
            for p in 1..16 {
                prop_assert_eq!(x.value(p, k), x.value(0, k));
            }
        }
    }

    #[test]
    fn identities_hold_for_constant_markets(r in 0.0f64..0.08, premium in -0.1f64..0.2, sigma in 0.1f64..0.5, gamma in 0.1f64..3.0) {
        let s = common::constants(r, r + premium, sigma);
        let g = simulate_brownian(4, 50, 1.0, 1).unwrap();
        let zero = Process::zeros(51);
        let (sol, op) = general_equilibrium(&s, gamma, &zero, &zero, &g).unwrap();
        for (name, v) in sol.identity_residuals().unwrap() {
            prop_assert!(v <= 1e-10, "{name}: {v}");
        }
        prop_assert!(op.theta.sup_abs() <= 1e-12);
        let m = sol.mn.y.sup_abs();
        prop_assert!(sol.p1.y.min() >= 4.0 / (m * m) * (1.0 - 1e-12));
    }

    #[test]
    fn constant_markets_match_the_closed_form(r in 0.0f64..0.08, premium in 0.01f64..0.2, sigma in 0.1f64..0.5, gamma in 0.1f64..3.0) {
        let s = common::constants(r, r + premium, sigma);
        let g = simulate_brownian(4, 400, 1.0, 1).unwrap();
        let mv = solve_mv_equilibrium(&s, gamma, &g).unwrap();
        let exact = mv_closed_form_deterministic(&s, gamma, g.times()).unwrap();
        let phi = exact.phi.value(0, 0);
        prop_assert!((mv.operator.phi.value(0, 0) - phi).abs() <= 1e-3 * phi.abs());
    }

    #[test]
    fn theta_ignores_gamma_and_phi_scales_with_it(gamma in 0.1f64..2.0, seed in 0u64..1000) {
        let s = common::with_coefficients(random_rate(0.02, 0.02), CoefficientSpec::constant(0.08), CoefficientSpec::constant(0.2));
        let g = simulate_brownian(400, 20, 1.0, seed).unwrap();
        let a = solve_mv_equilibrium(&s, gamma, &g).unwrap();
        let b = solve_mv_equilibrium(&s, 2.0 * gamma, &g).unwrap();
        prop_assert_eq!(&a.operator.theta, &b.operator.theta);
        let twice = a.operator.phi.map(|v| 2.0 * v);
        prop_assert!(twice.max_abs_diff(&b.operator.phi).unwrap() <= 1e-12 * twice.sup_abs().max(1.0));
    }

    #[test]
    fn first_order_term_is_odd_in_v(v in 0.05f64..5.0, seed in 0u64..1000, start in 0usize..10) {
        let s = common::with_coefficients(random_rate(0.02, 0.02), CoefficientSpec::constant(0.08), CoefficientSpec::constant(0.2));
        let g = simulate_brownian(500, 20, 1.0, seed).unwrap();
        let c = evaluate_coefficients(&s, &g).unwrap();
        let mv = solve_mv_equilibrium(&s, 0.5, &g).unwrap();
        let objective = Objective::MeanVariance { gamma: 0.5 };
        let run = |a: f64| {
            let probe = Probe { step: start, amount: PerturbationAmount::Constant(a) };
            perturbation_quotient(&c, &mv.operator, objective, 1.0, probe, &[0.1, 0.05], &g).unwrap()
        };
        let (plus, minus) = (run(v), run(-v));
        for (a, b) in plus.ladder.iter().zip(&minus.ladder) {
            for (x, y) in a.first.iter().zip(&b.first) {
                prop_assert!((x.value + y.value).abs() <= 1e-12 * x.value.abs().max(1e-12), "{} vs {}", x.value, y.value);
            }
            for (x, y) in a.second.iter().zip(&b.second) {
                prop_assert!((x.value - y.value).abs() <= 1e-12 * x.value.abs().max(1e-12));
            }
        }
        for x in &plus.ladder[0].second {
            if start == 0 {
                prop_assert!(x.value >= 0.0);
            }
        }
    }

    #[test]
    fn cubic_fits_reproduce_cubics(c in proptest::array::uniform4(-2.0f64..2.0), t in 0.05f64..1.0, seed in any::<u64>()) {
        let g = simulate_brownian(300, 1, t, seed).unwrap();
        let bound = CLAMP * t.sqrt();
        let w: Vec<f64> = g.w_at(1).iter().map(|w| w.clamp(-bound, bound)).collect();
        let y: Vec<f64> = w.iter().map(|w| c[0] + c[1] * w + c[2] * w * w + c[3] * w * w * w).collect();
        let f = fit(Basis::at_time(t), &w, &y).unwrap();
        for (wi, yi) in w.iter().zip(&y) {
            prop_assert!((f.evaluate(*wi) - yi).abs() <= 1e-5 * (1.0 + yi.abs()));
        }
    }

    #[test]
    fn fitted_values_average_to_the_sample_mean(seed in any::<u64>(), t in 0.05f64..1.0) {
        let g = simulate_brownian(200, 1, t, seed).unwrap();
        let w = g.w_at(1);
        let y: Vec<f64> = w.iter().map(|w| (3.0 * w).sin() + w.abs()).collect();
        let f = fit(Basis::at_time(t), w, &y).unwrap();
        let fitted: f64 = f.predict(w).iter().sum::<f64>() / 200.0;
        let mean: f64 = y.iter().sum::<f64>() / 200.0;
        prop_assert!((fitted - mean).abs() <= 1e-6);
    }

    #[test]
    fn extrapolation_weights_are_consistent(e in proptest::collection::vec(0.01f64..1.0, 2..5)) {
        let mut e = e;
        e.sort_by(f64::total_cmp);
        e.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        prop_assume!(e.len() >= 2);
        let w = intercept_weights(&e);
        let sum: f64 = w.iter().sum();
        let slope: f64 = w.iter().zip(&e).map(|(w, e)| w * e).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
        prop_assert!(slope.abs() <= 1e-9);
    }

    #[test]
    fn backward_terminal_is_exact(terminal in -10.0f64..10.0, a in -0.5f64..0.5, seed in any::<u64>()) {
        let g = simulate_brownian(50, 10, 1.0, seed).unwrap();
        let xi: Vec<f64> = g.w_at(10).iter().map(|w| terminal + w.tanh()).collect();
        let spec = LinearBsdeSpec::new(Process::constant(a, 11), Process::zeros(11), Process::zeros(11), Terminal::Paths(xi.clone()));
        let pair = solve_linear_bsde(&spec, &g).unwrap();
        for (p, x) in xi.iter().enumerate() {
            prop_assert_eq!(pair.y.value(p, 10), *x);
        }
    }
}

#[test]
fn linear_claim_integrand_is_one() {
    let g = simulate_brownian(100, 20, 1.0, 3).unwrap();
    let c = claim_processes(&ClaimSpec::new(Payoff::Linear), &g).unwrap();
    for k in 0..20 {
        for p in 0..100 {
            assert_eq!(c.zeta.value(p, k), 1.0);
            assert_eq!(c.lambda.value(p, k), g.w(p, k));
        }
    }
}
