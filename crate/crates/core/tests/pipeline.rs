mod common;

use closedloop::bsde::{build_riccati_core, general_equilibrium, solve_mn};
use closedloop::config::{Overrides, ProblemKind};
use closedloop::experiment::{run_experiment, Command};
use closedloop::hedging::{claim_drift, claim_processes};
use closedloop::io::{read_operator_csv, write_operator_csv};
use closedloop::market::{
    evaluate_coefficients, forward_transition, simulate_brownian, simulate_state, BoundedMap, ClaimSpec,
    CoefficientSpec, Control, Payoff,
};
use closedloop::regression::{fit, Basis};
use closedloop::verify::{build_auxiliary_pair, recursion_residuals, tracked_drift};
use closedloop::{Error, Process};

/// Family-wise bound for per-step z-scores over at most a few hundred steps.
const STEP_SIGMAS: f64 = 4.0;

fn random_rate_market(paths: usize, steps: usize, seed: u64) -> (closedloop::market::MarketScenario, closedloop::market::BrownianGrid) {
    let cfg = common::load("random_rate");
    (cfg.build_scenario().unwrap(), simulate_brownian(paths, steps, 1.0, seed).unwrap())
}

#[test]
fn auxiliary_pair_replays_its_recursion() {
    let (s, g) = random_rate_market(20_000, 40, 11);
    let c = evaluate_coefficients(&s, &g).unwrap();
    let zero = Process::zeros(g.n_nodes());
    let (sol, op) = general_equilibrium(&s, 0.5, &zero, &zero, &g).unwrap();
    let states = simulate_state(&c, Control::Feedback(&op), 1.0, &zero, &zero, &g).unwrap();
    let anchor = 10;
    let pair = build_auxiliary_pair(&sol, &op, &c, &states, &zero, anchor, &g).unwrap();

    for p in 0..g.n_paths() {
        assert_eq!(pair.y.value(p, anchor - 1), 0.0);
    }
    let x_t = states.terminal();
    let f = fit(Basis::at_time(g.time(anchor)), g.w_at(anchor), &x_t).unwrap();
    for (p, x) in x_t.iter().enumerate() {
        let expected = 2.0 * x - 2.0 * f.evaluate(g.w(p, anchor)) - 0.5;
        assert!((pair.y.value(p, g.n_steps()) - expected).abs() < 1e-9);
    }

    let steps = recursion_residuals(&pair, &sol, &op, &c, &states, &g).unwrap();
    assert_eq!(steps.len(), g.n_steps() - anchor);
    for s in &steps {
        assert!(s.z_score().abs() <= STEP_SIGMAS, "step {}: {:?}", s.step, s);
    }
}

#[test]
fn tracked_process_has_no_drift() {
    let (s, g) = random_rate_market(20_000, 40, 12);
    let c = evaluate_coefficients(&s, &g).unwrap();
    let zero = Process::zeros(g.n_nodes());
    let (sol, op) = general_equilibrium(&s, 0.5, &zero, &zero, &g).unwrap();
    let states = simulate_state(&c, Control::Feedback(&op), 1.0, &zero, &zero, &g).unwrap();
    for s in tracked_drift(&sol, &states, &g).unwrap() {
        assert!(s.z_score().abs() <= STEP_SIGMAS, "{s:?}");
    }
}

#[test]
fn claim_price_is_a_martingale() {
    let g = simulate_brownian(20_000, 40, 1.0, 13).unwrap();
    let claim = ClaimSpec::new(Payoff::Bounded {
        map: BoundedMap::Tanh {
            level: 0.0,
            amplitude: 1.0,
            rate: 2.0,
        },
        bound: 1.0,
    });
    let c = claim_processes(&claim, &g).unwrap();
    for (k, (mean, se)) in claim_drift(&c, &g).into_iter().enumerate() {
        assert!(mean.abs() <= STEP_SIGMAS * se + 1e-12, "step {k}: {mean} +- {se}");
    }
}

#[test]
fn forward_transition_tracks_p2_ratio() {
    let s = common::with_coefficients(
        CoefficientSpec::TimeFunction {
            samples: vec![0.01, 0.06, 0.03],
        },
        CoefficientSpec::constant(0.08),
        CoefficientSpec::constant(0.2),
    );
    let g = simulate_brownian(2, 400, 1.0, 1).unwrap();
    let c = evaluate_coefficients(&s, &g).unwrap();
    let core = build_riccati_core(&solve_mn(&c, &g).unwrap(), &c).unwrap();
    let fwd = forward_transition(&c, &core.theta, &g).unwrap();
    let claim = core.transition_claim();
    let worst = fwd.max_abs_diff(&claim).unwrap();
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn operator_dump_round_trips_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::load("random_rate");
    cfg.apply(&Overrides {
        paths: Some(3000),
        steps: Some(40),
        ..Default::default()
    })
    .unwrap();
    let s = cfg.build_scenario().unwrap();
    let g = simulate_brownian(cfg.grid.paths, cfg.grid.steps, 1.0, cfg.grid.seed).unwrap();
    let zero = Process::zeros(g.n_nodes());
    let (_, op) = general_equilibrium(&s, cfg.gamma().unwrap(), &zero, &zero, &g).unwrap();
    let dump = dir.path().join("operator.csv");
    write_operator_csv(&dump, &op, &g, None).unwrap();

    cfg.out = dir.path().join("verify-dump");
    let from_dump = run_experiment(Command::Verify, &cfg, Some(&dump)).unwrap();
    cfg.out = dir.path().join("verify-solved");
    let resolved = run_experiment(Command::Verify, &cfg, None).unwrap();
    let read = |d: &str| std::fs::read(dir.path().join(d).join("verification.csv")).unwrap();
    assert_eq!(read("verify-dump"), read("verify-solved"));
    assert_eq!(from_dump.exit_code(), resolved.exit_code());
}

#[test]
fn truncated_operator_dump_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::load("constants");
    cfg.apply(&Overrides {
        paths: Some(500),
        steps: Some(20),
        out: Some(dir.path().to_path_buf()),
        ..Default::default()
    })
    .unwrap();
    let g = simulate_brownian(500, 20, 1.0, cfg.grid.seed).unwrap();
    let op = closedloop::EquilibriumOperator::new(
        g.w_process().map(|w| 0.01 * w),
        Process::zeros(21),
        closedloop::Provenance::External,
    );
    let dump = dir.path().join("op.csv");
    write_operator_csv(&dump, &op, &g, Some(100)).unwrap();
    assert!(matches!(read_operator_csv(&dump, &g), Err(Error::GridMismatch(_))));
    let e = run_experiment(Command::Verify, &cfg, Some(&dump)).unwrap_err();
    assert_eq!(closedloop::experiment::error_exit_code(&e), 2);
}

#[test]
fn every_command_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let runs = [
        (Command::Solve, "constants", vec!["operator.csv", "riccati.csv", "strategy.csv", "wealth.csv"]),
        (Command::Solve, "random_rate", vec!["operator.csv", "riccati.csv"]),
        (Command::Compare, "random_premium", vec!["comparison.csv", "operator_closed.csv", "operator_open.csv"]),
        (Command::Hedge, "hedge_bounded", vec!["hedging.csv", "operator.csv", "strategy.csv"]),
        (Command::Verify, "hedge_linear", vec!["verification.csv", "power.csv"]),
    ];
    for (command, name, expected) in runs {
        let mut cfg = common::load(name);
        let out = dir.path().join(name);
        cfg.apply(&Overrides {
            paths: Some(2000),
            steps: Some(40),
            out: Some(out.clone()),
            ..Default::default()
        })
        .unwrap();
        let outcome = run_experiment(command, &cfg, None).unwrap();
        assert!(outcome.summary.contains("overall:"), "{name}");
        assert!(out.join("summary.txt").is_file());
        for f in expected {
            assert!(out.join(f).is_file(), "{name}: missing {f}");
        }
    }
}

#[test]
fn compare_needs_a_risk_aversion() {
    let mut cfg = common::load("random_premium");
    cfg.gamma = None;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    assert_eq!(cfg.kind, ProblemKind::OpenLoopCompare);
}
