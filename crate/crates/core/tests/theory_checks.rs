use netnewton::harness::{self, ExperimentConfig, Scenario};
use netnewton::prelude::*;
use netnewton::theory::{check_contraction, check_linear_rate, quadratic_phase_violations};

fn quadratic_run(order: usize, iters: usize) -> (PenalizedProblem<DiagonalQuadratic>, SolverOutcome) {
    let cfg = ExperimentConfig::defaults(Scenario::QuadraticFixed);
    let (prob, x_star) = harness::quadratic_instance(&cfg).unwrap();
    let solver = SolverConfig::new(Method::NetworkNewton(order)).with_tol(1e-12).with_max_iters(iters);
    let run = run_solver(&prob, &StackedIterate::zeros(cfg.n, cfg.p), &solver, Some(&x_star)).unwrap();
    (prob, run)
}

#[test]
fn quadratic_rate_bound_has_no_violations() {
    for order in [0, 1, 2] {
        let (prob, run) = quadratic_run(order, 300);
        let f_star = prob.value(&reference_solve(&prob, &StackedIterate::zeros(100, 4), 1e-12, 5).unwrap()).unwrap();
        let f0 = run.trace.records[0].f_value;
        let c = harness::theory_constants(&prob, Method::NetworkNewton(order), 1.0, f0, f_star).unwrap().unwrap();
        assert_eq!((c.gamma1, c.gamma2), (0.0, 0.0));
        let report = check_rate_bound(&run.trace, &c);
        assert!(report.evaluated);
        assert_eq!(report.violations(), 0);
        assert!(check_linear_rate(&run.trace, c.zeta, f_star).is_empty());
        let contraction = check_contraction(&run.trace, c.rho.powi(order as i32 + 1), 1e-9);
        assert!(contraction.violations.is_empty(), "K = {order}: worst ratio {}", contraction.worst_ratio);
    }
}

#[test]
fn quadratic_taylor_remainder_vanishes() {
    let cfg = ExperimentConfig { n: 20, ..ExperimentConfig::defaults(Scenario::QuadraticFixed) };
    let (prob, _) = harness::quadratic_instance(&cfg).unwrap();
    let mut y = StackedIterate::zeros(20, 4);
    for _ in 0..20 {
        let next = nn_step(&prob, &y, 1, 1.0).unwrap();
        let r = check_taylor_remainder(&prob, &y, &next).unwrap();
        assert!(r.remainder < 1e-10 && r.holds);
        y = next;
    }
}

fn small_logistic_problem() -> PenalizedProblem<LogisticLoss> {
    let cfg = ExperimentConfig {
        n: 10,
        p: 3,
        samples_per_node: 10,
        mu: 1.0,
        sigma_plus: 1.5,
        sigma_minus: 1.5,
        lambda: 1.0,
        alpha: 0.1,
        ..ExperimentConfig::defaults(Scenario::LogisticNonseparable)
    };
    harness::logistic_instance(&cfg).unwrap().0
}

#[test]
fn logistic_taylor_remainder_within_bound() {
    let prob = small_logistic_problem();
    for method in [Method::Dgd, Method::NetworkNewton(0), Method::NetworkNewton(2)] {
        let mut y = StackedIterate::zeros(10, 3);
        for _ in 0..40 {
            let next = match method {
                Method::Dgd => dgd_step(&prob, &y).unwrap(),
                Method::NetworkNewton(k) => nn_step(&prob, &y, k, 1.0).unwrap(),
            };
            let r = check_taylor_remainder(&prob, &y, &next).unwrap();
            assert!(r.holds, "{method}: remainder {} > bound {}", r.remainder, r.bound);
            y = next;
        }
    }
}

#[test]
fn logistic_rate_bound_with_stepsize_rule() {
    let prob = small_logistic_problem();
    let y0 = StackedIterate::zeros(10, 3);
    let f0 = prob.value(&y0).unwrap();
    let f_star = prob.value(&reference_solve(&prob, &y0, 1e-12, 100).unwrap()).unwrap();
    for order in [0, 1, 4] {
        let provisional = harness::theory_constants(&prob, Method::NetworkNewton(order), 1.0, f0, f_star).unwrap().unwrap();
        let c = prob.curvature();
        let eps = stepsize_rule(c.m, c.lipschitz, provisional.lambda, provisional.upper_lambda, f0 - f_star).unwrap();
        let constants = harness::theory_constants(&prob, Method::NetworkNewton(order), eps, f0, f_star).unwrap().unwrap();
        assert!(constants.zeta_valid(), "K = {order}: zeta {}", constants.zeta);
        let solver = SolverConfig::new(Method::NetworkNewton(order)).with_epsilon(eps).with_tol(1e-12).with_max_iters(300);
        let run = run_solver(&prob, &y0, &solver, None).unwrap();
        let report = check_rate_bound(&run.trace, &constants);
        assert!(report.evaluated);
        assert_eq!(report.violations(), 0, "K = {order}");
        assert!(quadratic_phase_violations(&report, &constants).is_empty());
        assert!(check_linear_rate(&run.trace, constants.zeta, f_star).is_empty());
    }
}

#[test]
fn unit_step_logistic_constants_flagged() {
    let cfg = ExperimentConfig::defaults(Scenario::LogisticSeparable);
    let (prob, _) = harness::logistic_instance(&cfg).unwrap();
    let y0 = StackedIterate::zeros(cfg.n, cfg.p);
    let f0 = prob.value(&y0).unwrap();
    let c = harness::theory_constants(&prob, Method::NetworkNewton(1), 1.0, f0, 0.0).unwrap().unwrap();
    assert!(!c.zeta_valid());
    let report = check_rate_bound(&Trace::default(), &c);
    assert!(!report.evaluated);
}
