//! Config-driven runs: solve, verify, compare and hedge.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::bsde::{general_equilibrium_from, solve_mn, RiccatiSolution};
use crate::config::{ExperimentConfig, ProblemKind};
use crate::error::{Error, Result};
use crate::hedging::{claim_processes, hedging_objective_reduction, solve_hedging_equilibrium_from};
use crate::io::{read_operator_csv, write_components_csv, write_operator_csv, write_paths_csv, write_table, write_text};
use crate::market::{
    evaluate_coefficients, simulate_brownian, simulate_state, BrownianGrid, CoefficientPaths, Control,
    MarketScenario, PerturbationAmount,
};
use crate::mean_variance::{equilibrium_strategy, mv_closed_form_deterministic, solve_mv_equilibrium_from};
use crate::open_loop::{compare_operators, solve_openloop_from, solve_openloop_with, FirstPairMethod};
use crate::operator::EquilibriumOperator;
use crate::process::Process;
use crate::verify::{
    build_auxiliary_pair, diagonal_identity_check, power_check, verify_operator, Objective, Probe, QuotientReport,
};

/// Tolerance for exact algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-10;

/// Relative tolerance for `phi*(0)` against a closed form.
pub const PHI0_REL_TOL: f64 = 0.01;

/// Bound on `|Theta*|` when every coefficient is deterministic.
pub const DEGENERATE_THETA_TOL: f64 = 5e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Solve,
    Verify,
    Compare,
    Hedge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable pass condition.
    pub condition: String,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            condition: format!("<= {bound:e}"),
            passed: value <= bound,
        }
    }

    fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            condition: format!(">= {bound}"),
            passed: value >= bound,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub summary: String,
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// `0` when every check passes, `1` otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

/// `2` for configuration and input errors, `3` for numerical failures.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::FloorViolation { .. }
        | Error::UnboundedCoefficient(_)
        | Error::InvalidArgument(_)
        | Error::GridMismatch(_) => 2,
        _ => 3,
    }
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    scenario: MarketScenario,
    grid: BrownianGrid,
    coeffs: CoefficientPaths,
    summary: String,
    checks: Vec<Check>,
    files: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        let scenario = cfg.build_scenario()?;
        let grid = simulate_brownian(cfg.grid.paths, cfg.grid.steps, scenario.horizon(), cfg.grid.seed)?;
        let coeffs = evaluate_coefficients(&scenario, &grid)?;
        let mut summary = String::new();
        writeln!(summary, "kind: {:?}", cfg.kind).unwrap();
        writeln!(
            summary,
            "grid: {} paths, {} steps, seed {}, horizon {}",
            cfg.grid.paths,
            cfg.grid.steps,
            cfg.grid.seed,
            scenario.horizon()
        )
        .unwrap();
        writeln!(
            summary,
            "coefficients: {}",
            if scenario.is_deterministic() { "deterministic" } else { "random" }
        )
        .unwrap();
        Ok(Run {
            cfg,
            scenario,
            grid,
            coeffs,
            summary,
            checks: Vec::new(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.cfg.out.join(name);
        self.files.push(p.clone());
        p
    }

    fn line(&mut self, text: String) {
        self.summary.push_str(&text);
        self.summary.push('\n');
    }

    fn dump_operator(&mut self, name: &str, op: &EquilibriumOperator) -> Result<()> {
        let max = self.cfg.dump_paths;
        let p = self.path(name);
        write_operator_csv(&p, op, &self.grid, Some(max))
    }

    fn dump_components(&mut self, name: &str, comps: &[(&str, &Process)]) -> Result<()> {
        let max = self.cfg.dump_paths;
        let p = self.path(name);
        write_components_csv(&p, comps, &self.grid, Some(max))
    }

    fn zero(&self) -> Process {
        Process::zeros(self.grid.n_nodes())
    }

    fn phi0(&mut self, op: &EquilibriumOperator, expected: Option<f64>) {
        let phi0 = op.phi.value(0, 0);
        self.line(format!("phi*(0): {phi0:.6}"));
        self.line(format!("sup |Theta*|: {:.6e}", op.theta.sup_abs()));
        if let Some(e) = expected.or(self.cfg.checks.expected_phi0) {
            let tol = self.cfg.checks.phi0_rel_tol.unwrap_or(PHI0_REL_TOL);
            self.checks
                .push(Check::at_most("phi*(0) relative error", (phi0 - e).abs() / e.abs(), tol));
        }
    }

    fn identities(&mut self, sol: &RiccatiSolution) -> Result<()> {
        for (name, v) in sol.identity_residuals()? {
            self.checks.push(Check::at_most(name, v, IDENTITY_TOL));
        }
        Ok(())
    }

    fn diagonal(&mut self, sol: &RiccatiSolution, op: &EquilibriumOperator) -> Result<()> {
        let zero = self.zero();
        let states = simulate_state(&self.coeffs, Control::Feedback(op), self.cfg.x0, &zero, &zero, &self.grid)?;
        let pair = build_auxiliary_pair(sol, op, &self.coeffs, &states, &zero, 0, &self.grid)?;
        let d = diagonal_identity_check(&pair, &self.coeffs)?;
        self.checks
            .push(Check::at_most("sup |beta Y' + sigma Z'| on the diagonal", d.sup, IDENTITY_TOL));
        Ok(())
    }

    fn finish(self) -> Result<Outcome> {
        let mut summary = self.summary;
        summary.push_str("\nchecks:\n");
        for c in &self.checks {
            writeln!(
                summary,
                "  {} {}: {:e} ({})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.condition
            )
            .unwrap();
        }
        let verdict = if self.checks.iter().all(|c| c.passed) { "PASS" } else { "FAIL" };
        writeln!(summary, "overall: {verdict}").unwrap();
        let p = self.cfg.out.join("summary.txt");
        write_text(&p, &summary)?;
        let mut files = self.files;
        files.push(p);
        Ok(Outcome {
            summary,
            checks: self.checks,
            files,
        })
    }
}

/// Runs one command on a validated configuration and writes its outputs.
pub fn run_experiment(command: Command, cfg: &ExperimentConfig, operator_dump: Option<&Path>) -> Result<Outcome> {
    cfg.validate()?;
    let mut run = Run::new(cfg)?;
    match (command, cfg.kind) {
        (Command::Hedge, _) | (Command::Solve, ProblemKind::Hedging) => hedge(&mut run)?,
        (Command::Compare, _) | (Command::Solve, ProblemKind::OpenLoopCompare) => compare(&mut run)?,
        (Command::Solve, ProblemKind::General) => general(&mut run)?,
        (Command::Solve, ProblemKind::MeanVariance) => mean_variance(&mut run)?,
        (Command::Verify, _) => verify(&mut run, operator_dump)?,
    }
    run.finish()
}

fn mean_variance(run: &mut Run) -> Result<()> {
    let gamma = run.cfg.gamma()?;
    let mn = solve_mn(&run.coeffs, &run.grid)?;
    let mv = solve_mv_equilibrium_from(&run.coeffs, mn.clone(), gamma, &run.grid)?;
    let zero = run.zero();
    let (sol, general_op) = general_equilibrium_from(&run.coeffs, mn, gamma, &zero, &zero, &run.grid)?;

    let closed = if run.scenario.is_deterministic() {
        let op = mv_closed_form_deterministic(&run.scenario, gamma, run.grid.times())?;
        Some(op.phi.value(0, 0))
    } else {
        None
    };
    if let Some(c) = closed {
        run.line(format!("closed-form phi*(0): {c:.6}"));
        run.checks.push(Check::at_most(
            "sup |Theta*| (deterministic coefficients)",
            mv.operator.theta.sup_abs(),
            DEGENERATE_THETA_TOL,
        ));
    }
    run.phi0(&mv.operator, closed);
    run.line(format!("sup |sL3|: {:.6e}", mv.lambda3_sup()));
    run.identities(&sol)?;
    let shared = mv.operator.theta.max_abs_diff(&general_op.theta)?;
    run.checks
        .push(Check::at_most("sup |Theta* (mean-variance) - Theta* (general)|", shared, IDENTITY_TOL));
    run.diagonal(&sol, &general_op)?;

    let states = simulate_state(
        &run.coeffs,
        Control::Feedback(&mv.operator),
        run.cfg.x0,
        &zero,
        &zero,
        &run.grid,
    )?;
    let u = equilibrium_strategy(&mv.operator, &states)?;
    run.dump_operator("operator.csv", &mv.operator)?;
    let mut comps = vec![("M", &mv.mn.y), ("N", &mv.mn.z)];
    comps.extend(mv.components());
    run.dump_components("riccati.csv", &comps)?;
    let (p, max) = (run.path("strategy.csv"), run.cfg.dump_paths);
    write_paths_csv(&p, &u, &run.grid, Some(max))?;
    let (p, max) = (run.path("wealth.csv"), run.cfg.dump_paths);
    write_paths_csv(&p, &states.x, &run.grid, Some(max))
}

fn general(run: &mut Run) -> Result<()> {
    let gamma = run.cfg.gamma()?;
    let mn = solve_mn(&run.coeffs, &run.grid)?;
    let zero = run.zero();
    let (sol, op) = general_equilibrium_from(&run.coeffs, mn, gamma, &zero, &zero, &run.grid)?;
    run.phi0(&op, None);
    run.identities(&sol)?;
    run.diagonal(&sol, &op)?;
    run.dump_operator("operator.csv", &op)?;
    run.dump_components("riccati.csv", &sol.components())
}

fn hedge(run: &mut Run) -> Result<()> {
    let claim = run.cfg.claim()?.clone();
    let mn = solve_mn(&run.coeffs, &run.grid)?;
    let processes = claim_processes(&claim, &run.grid)?;
    let xi = processes.terminal();
    let h = solve_hedging_equilibrium_from(&run.coeffs, mn.clone(), processes, &run.grid)?;
    let mv = solve_mv_equilibrium_from(&run.coeffs, mn, run.cfg.gamma.unwrap_or(0.0), &run.grid)?;
    run.phi0(&h.operator, None);
    let shared = h.operator.theta.max_abs_diff(&mv.operator.theta)?;
    run.checks
        .push(Check::at_most("sup |Theta* (hedging) - Theta* (mean-variance)|", shared, IDENTITY_TOL));

    let zero = run.zero();
    let hedged = simulate_state(
        &run.coeffs,
        Control::Feedback(&h.operator),
        run.cfg.x0,
        &zero,
        &zero,
        &run.grid,
    )?;
    let idle = simulate_state(&run.coeffs, Control::Explicit(&zero), run.cfg.x0, &zero, &zero, &run.grid)?;
    let v_hedged = hedging_objective_reduction(&hedged, &xi, &run.grid, 0)?;
    let v_idle = hedging_objective_reduction(&idle, &xi, &run.grid, 0)?;
    let factor = v_idle.value / v_hedged.value;
    run.line(format!("Var[xi - X(T)] unhedged: {:.6e} (se {:.2e})", v_idle.value, v_idle.se));
    run.line(format!("Var[xi - X(T)] hedged:   {:.6e} (se {:.2e})", v_hedged.value, v_hedged.se));
    run.line(format!("variance reduction factor: {factor:.3}"));
    if let Some(m) = run.cfg.checks.min_variance_reduction {
        run.checks.push(Check::at_least("variance reduction factor", factor, m));
    }
    let p = run.path("hedging.csv");
    write_table(
        &p,
        &["strategy", "variance", "se"],
        &[
            vec!["unhedged".into(), v_idle.value.to_string(), v_idle.se.to_string()],
            vec!["equilibrium".into(), v_hedged.value.to_string(), v_hedged.se.to_string()],
        ],
    )?;
    let pi = equilibrium_strategy(&h.operator, &hedged)?;
    run.dump_operator("operator.csv", &h.operator)?;
    let mut comps = vec![("M", &h.mn.y), ("N", &h.mn.z)];
    comps.extend(h.components());
    run.dump_components("riccati.csv", &comps)?;
    let (p, max) = (run.path("strategy.csv"), run.cfg.dump_paths);
    write_paths_csv(&p, &pi, &run.grid, Some(max))
}

fn compare(run: &mut Run) -> Result<()> {
    let gamma = run.cfg.gamma()?;
    let mn = solve_mn(&run.coeffs, &run.grid)?;
    let mv = solve_mv_equilibrium_from(&run.coeffs, mn, gamma, &run.grid)?;
    let shared = solve_openloop_from(&run.coeffs, mv.sp1.clone(), gamma, &run.grid)?;
    let independent = solve_openloop_with(&run.coeffs, gamma, &run.grid, FirstPairMethod::DirectQuadratic)?;
    let det_rate = run.scenario.rate_is_deterministic();

    let shared_theta = mv.operator.theta.max_abs_diff(&shared.operator.theta)?;
    run.checks.push(Check::at_most(
        "sup |Theta* - open-loop Theta| (shared first pair)",
        shared_theta,
        IDENTITY_TOL,
    ));
    let rep = compare_operators(&mv.operator, &independent.operator, det_rate)?;
    run.line("closed loop vs open loop (independent first pair):".into());
    run.line(rep.to_string());
    run.checks.push(Check {
        name: "Theta relative sup difference".into(),
        value: rep.theta.relative,
        condition: format!("<= {}", crate::open_loop::EQUALITY_TOL),
        passed: rep.theta_equal,
    });
    if let Some(eq) = rep.phi_equal {
        run.checks.push(Check {
            name: "phi relative sup difference (deterministic rate)".into(),
            value: rep.phi.relative,
            condition: format!("<= {}", crate::open_loop::EQUALITY_TOL),
            passed: eq,
        });
    }
    let p = run.path("comparison.csv");
    let row = |name: &str, d: &crate::open_loop::ComponentDiff, eq: Option<bool>| {
        vec![
            name.to_string(),
            d.sup.to_string(),
            d.l2.to_string(),
            d.relative.to_string(),
            eq.map_or("not-judged".into(), |e| e.to_string()),
        ]
    };
    write_table(
        &p,
        &["component", "sup", "l2", "relative", "equal"],
        &[
            row("theta", &rep.theta, Some(rep.theta_equal)),
            row("phi", &rep.phi, rep.phi_equal),
        ],
    )?;
    run.dump_operator("operator_closed.csv", &mv.operator)?;
    run.dump_operator("operator_open.csv", &independent.operator)?;
    run.dump_components("openloop.csv", &independent.components())
}

fn amount_label(a: PerturbationAmount) -> String {
    match a {
        PerturbationAmount::Constant(c) => c.to_string(),
        PerturbationAmount::ClampedBrownian { scale, cap } => format!("{scale}*clamp(W,{cap})"),
    }
}

fn quotient_rows(reports: &[QuotientReport]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for r in reports {
        let v = amount_label(r.probe.amount);
        for row in r.ladder.iter().chain(std::iter::once(&r.extrapolated)) {
            let eps = row.epsilon.map_or("0".to_string(), |e| e.to_string());
            for (term, cells) in [("first", &row.first), ("second", &row.second), ("total", &row.total)] {
                for c in cells {
                    out.push(vec![
                        r.t.to_string(),
                        v.clone(),
                        eps.clone(),
                        c.w.to_string(),
                        term.to_string(),
                        c.value.to_string(),
                        c.se.to_string(),
                    ]);
                }
            }
        }
    }
    out
}

const QUOTIENT_HEADER: [&str; 7] = ["t", "v", "epsilon", "w", "term", "value", "se"];

fn verify(run: &mut Run, dump: Option<&Path>) -> Result<()> {
    let zero = run.zero();
    let mn = solve_mn(&run.coeffs, &run.grid)?;
    let (operator, claim) = match run.cfg.kind {
        ProblemKind::MeanVariance | ProblemKind::General => {
            let gamma = run.cfg.gamma()?;
            let (sol, op) = general_equilibrium_from(&run.coeffs, mn, gamma, &zero, &zero, &run.grid)?;
            run.diagonal(&sol, &op)?;
            (op, None)
        }
        ProblemKind::Hedging => {
            let processes = claim_processes(run.cfg.claim()?, &run.grid)?;
            let xi = processes.terminal();
            let h = solve_hedging_equilibrium_from(&run.coeffs, mn, processes, &run.grid)?;
            (h.operator, Some(xi))
        }
        ProblemKind::OpenLoopCompare => {
            return Err(Error::Config(
                "`verify` needs kind mean-variance, general or hedging".into(),
            ))
        }
    };
    let operator = match dump {
        Some(path) => {
            run.line(format!("operator: read from {}", path.display()));
            read_operator_csv(path, &run.grid)?
        }
        None => {
            run.line(format!("operator: solved ({})", operator.provenance));
            operator
        }
    };
    let objective = match &claim {
        Some(xi) => Objective::Hedging { claim: xi },
        None => Objective::MeanVariance {
            gamma: run.cfg.gamma()?,
        },
    };
    let horizon = run.grid.horizon();
    let probes: Vec<Probe> = run
        .cfg
        .probes
        .times
        .iter()
        .flat_map(|t| {
            let step = run.grid.step_of(t * horizon);
            run.cfg.probes.amounts.iter().map(move |a| Probe {
                step,
                amount: a.amount(),
            })
        })
        .collect();
    let ladder = run.cfg.probes.ladder.clone();
    let reports = verify_operator(&run.coeffs, &operator, objective, run.cfg.x0, &probes, &ladder, &run.grid)?;
    let report = crate::verify::VerificationReport { reports };
    run.line(String::new());
    run.line(report.to_string());
    let worst_total = report.min_total_z();
    let worst_first = report
        .reports
        .iter()
        .map(QuotientReport::max_first_abs_z)
        .fold(0.0, f64::max);
    run.checks.push(Check::at_least(
        "min z of extrapolated quotient",
        worst_total,
        -crate::verify::PASS_SIGMAS,
    ));
    run.checks.push(Check::at_most(
        "max |z| of extrapolated first-order term",
        worst_first,
        crate::verify::PASS_SIGMAS,
    ));
    let p = run.path("verification.csv");
    write_table(&p, &QUOTIENT_HEADER, &quotient_rows(&report.reports))?;

    let factor = run.cfg.probes.power_factor;
    if factor != 0.0 && factor != 1.0 {
        let power = power_check(
            &run.coeffs,
            &operator,
            objective,
            run.cfg.x0,
            &probes,
            &ladder,
            &run.grid,
            factor,
        )?;
        run.line(format!("power check (phi x {factor}): min z {:.3}", power.min_z));
        run.checks.push(Check {
            name: format!("min z with phi scaled by {factor}"),
            value: power.min_z,
            condition: format!("< -{}", crate::verify::POWER_SIGMAS),
            passed: power.rejected(),
        });
        let p = run.path("power.csv");
        write_table(&p, &QUOTIENT_HEADER, &quotient_rows(&power.reports))?;
    }
    Ok(())
}
