//! Scenario drivers: build the instance a config describes, run every
//! selected method and collect traces, summaries and diagnostics.

use log::{info, warn};
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, Scenario};
use crate::adaptive::{ann_run, AnnConfig, AnnOutcome};
use crate::error::{Error, Result};
use crate::objectives::{
    generate_quadratic_from, quadratic_optimum, DiagonalQuadratic, LocalObjective, LogisticDataConfig,
    LogisticDataset, LogisticLoss,
};
use crate::penalty::{PenalizedProblem, StackedIterate};
use crate::solvers::{reference_solve, run_solver, Method, SolverConfig, SolverOutcome};
use crate::theory::{check_rate_bound, compute_constants, RateReport, TheoryConstants, TheoryInputs};
use crate::topology::{Topology, WeightMatrix};

/// Tolerance of the reference solve used for `F*`.
pub const REFERENCE_TOL: f64 = 1e-12;

/// DGD first (when enabled), then NN-K in the order of `k_list`.
pub fn methods(cfg: &ExperimentConfig) -> Vec<Method> {
    let mut out = Vec::with_capacity(cfg.k_list.len() + 1);
    if cfg.include_dgd {
        out.push(Method::Dgd);
    }
    out.extend(cfg.k_list.iter().map(|&k| Method::NetworkNewton(k)));
    out
}

fn expect_scenario(cfg: &ExperimentConfig, allowed: &[Scenario]) -> Result<()> {
    cfg.validate()?;
    if allowed.contains(&cfg.scenario) {
        Ok(())
    } else {
        Err(Error::Config(format!("scenario {} cannot be run by this driver", cfg.scenario)))
    }
}

fn network(n: usize, degree: usize) -> Result<(Topology, WeightMatrix)> {
    let topo = Topology::d_regular_cycle(n, degree)?;
    let w = WeightMatrix::cycle(&topo, degree)?;
    Ok((topo, w))
}

/// The quadratic instance of a config: objectives drawn from `seed`, the
/// cycle of degree `cfg.degree`, and the exact minimizer of `sum_i f_i`.
pub fn quadratic_instance(cfg: &ExperimentConfig) -> Result<(PenalizedProblem<DiagonalQuadratic>, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let objectives = generate_quadratic_from(&mut rng, cfg.n, cfg.p, cfg.xi)?;
    let x_star = quadratic_optimum(&objectives)?;
    let (topo, w) = network(cfg.n, cfg.degree)?;
    Ok((PenalizedProblem::new(topo, w, objectives, cfg.alpha)?, x_star))
}

/// The logistic instance of a config and the minimizer of `sum_i f_i`.
pub fn logistic_instance(cfg: &ExperimentConfig) -> Result<(PenalizedProblem<LogisticLoss>, DVector<f64>)> {
    let data = logistic_dataset(cfg)?;
    let objectives = data.objectives(cfg.lambda)?;
    let x_star = centralized_minimizer(&objectives, REFERENCE_TOL, 100)?;
    let (topo, w) = network(cfg.n, cfg.degree)?;
    Ok((PenalizedProblem::new(topo, w, objectives, cfg.alpha)?, x_star))
}

pub fn logistic_dataset(cfg: &ExperimentConfig) -> Result<LogisticDataset> {
    LogisticDataset::generate(
        cfg.n,
        &LogisticDataConfig {
            p: cfg.p,
            samples_per_node: cfg.samples_per_node,
            mu: cfg.mu,
            sigma_plus: cfg.sigma_plus,
            sigma_minus: cfg.sigma_minus,
            lambda: cfg.lambda,
            seed: cfg.seed,
        },
    )
}

/// Minimizer of `sum_i f_i` by damped Newton steps on the aggregate.
pub fn centralized_minimizer<O: LocalObjective>(objectives: &[O], tol: f64, max_newton: usize) -> Result<DVector<f64>> {
    let p = objectives.first().ok_or_else(|| Error::Objective("no objectives".into()))?.dim();
    let total = |x: &DVector<f64>| objectives.iter().map(|o| o.value(x)).sum::<f64>();
    let mut x = DVector::zeros(p);
    let mut f = total(&x);
    for _ in 0..max_newton {
        let g = objectives.iter().fold(DVector::zeros(p), |acc, o| acc + o.gradient(&x));
        if g.norm() <= tol {
            break;
        }
        let h = objectives.iter().fold(nalgebra::DMatrix::zeros(p, p), |acc, o| acc + o.hessian(&x));
        let d = h.cholesky().ok_or(Error::NotPositiveDefinite { node: 0 })?.solve(&(-&g));
        let slope = g.dot(&d);
        let mut step = 1.0;
        loop {
            let trial = &x + step * &d;
            let ft = total(&trial);
            if ft <= f + 1e-4 * step * slope || step < 1e-12 {
                x = trial;
                f = ft;
                break;
            }
            step *= 0.5;
        }
        if step < 1e-12 {
            break;
        }
    }
    Ok(x)
}

/// Theory constants for an NN-K run on `prob` from `y0`, with `F*` taken
/// from `f_star`. Returns `None` for DGD.
pub fn theory_constants<O: LocalObjective>(
    prob: &PenalizedProblem<O>,
    method: Method,
    epsilon: f64,
    f0: f64,
    f_star: f64,
) -> Result<Option<TheoryConstants>> {
    let Method::NetworkNewton(order) = method else { return Ok(None) };
    let c = prob.curvature();
    let inputs = TheoryInputs {
        delta: prob.weights().delta(),
        upper_delta: prob.weights().upper_delta(),
        alpha: prob.alpha(),
        m: c.m,
        big_m: c.big_m,
        lipschitz: c.lipschitz,
        epsilon,
        order,
        gap: (f0 - f_star).max(0.0),
    };
    compute_constants(&inputs).map(Some)
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub outcome: SolverOutcome,
    pub constants: Option<TheoryConstants>,
    /// Rate-bound report; `None` for DGD.
    pub diagnostics: Option<RateReport>,
}

/// Result of the fixed-instance quadratic or logistic scenario.
#[derive(Debug, Clone)]
pub struct FixedResult {
    pub x_star: DVector<f64>,
    /// `F(y*)` of the penalized problem from the reference solve.
    pub f_star: f64,
    pub runs: Vec<MethodRun>,
}

impl FixedResult {
    pub fn run(&self, method: Method) -> Option<&MethodRun> {
        self.runs.iter().find(|r| r.method == method)
    }
}

fn run_methods<O: LocalObjective>(
    cfg: &ExperimentConfig,
    prob: &PenalizedProblem<O>,
    x_star: DVector<f64>,
) -> Result<FixedResult> {
    let y0 = StackedIterate::zeros(cfg.n, cfg.p);
    let f0 = prob.value(&y0)?;
    let f_star = prob.value(&reference_solve(prob, &y0, REFERENCE_TOL, 200)?)?;
    let mut runs = Vec::new();
    for method in methods(cfg) {
        let solver = SolverConfig::new(method).with_epsilon(cfg.epsilon).with_tol(cfg.tol).with_max_iters(cfg.max_iters);
        let outcome = run_solver(prob, &y0, &solver, Some(&x_star))?;
        let constants = theory_constants(prob, method, cfg.epsilon, f0, f_star)?;
        let diagnostics = constants.as_ref().map(|c| check_rate_bound(&outcome.trace, c));
        info!(
            "{method}: {} iterations, final relative error {:?}",
            outcome.trace.iterations(),
            outcome.trace.last().rel_error
        );
        runs.push(MethodRun { method, outcome, constants, diagnostics });
    }
    Ok(FixedResult { x_star, f_star, runs })
}

/// Every selected method on one shared quadratic instance.
pub fn run_fixed_quadratic(cfg: &ExperimentConfig) -> Result<FixedResult> {
    expect_scenario(cfg, &[Scenario::QuadraticFixed])?;
    let (prob, x_star) = quadratic_instance(cfg)?;
    run_methods(cfg, &prob, x_star)
}

/// Every selected method for `max_iters` iterations on one logistic dataset.
pub fn run_logistic(cfg: &ExperimentConfig) -> Result<FixedResult> {
    expect_scenario(cfg, &[Scenario::LogisticSeparable, Scenario::LogisticNonseparable])?;
    let (prob, x_star) = logistic_instance(cfg)?;
    run_methods(cfg, &prob, x_star)
}

/// One method on one histogram realization; counts are `None` when the
/// target was not reached within `max_iters` (censored).
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramRow {
    pub realization: usize,
    pub seed: u64,
    pub degree: usize,
    pub method: Method,
    pub iterations: Option<usize>,
    /// Per-pair exchanges: `t` for DGD, `(K + 1) t` for NN-K.
    pub exchanges: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSummary {
    pub method: Method,
    pub converged: usize,
    pub censored: usize,
    /// Statistics over the converged realizations; `None` if there are none.
    pub mean_iterations: Option<f64>,
    pub median_iterations: Option<f64>,
    pub mean_exchanges: Option<f64>,
    pub median_exchanges: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramResult {
    pub rows: Vec<HistogramRow>,
    pub summary: Vec<HistogramSummary>,
}

impl HistogramResult {
    pub fn summary_for(&self, method: Method) -> Option<&HistogramSummary> {
        self.summary.iter().find(|s| s.method == method)
    }
}

fn mean_median(mut v: Vec<f64>) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let mid = v.len() / 2;
    let median = if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) };
    (Some(mean), Some(median))
}

fn histogram_realization(cfg: &ExperimentConfig, realization: usize) -> Result<Vec<HistogramRow>> {
    let seed = cfg.seed.wrapping_add(realization as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let degree = cfg.degree_set[rng.gen_range(0..cfg.degree_set.len())];
    let objectives = generate_quadratic_from(&mut rng, cfg.n, cfg.p, cfg.xi)?;
    let x_star = quadratic_optimum(&objectives)?;
    let (topo, w) = network(cfg.n, degree)?;
    let prob = PenalizedProblem::new(topo, w, objectives, cfg.alpha)?;
    let y0 = StackedIterate::zeros(cfg.n, cfg.p);
    methods(cfg)
        .into_iter()
        .map(|method| {
            let solver = SolverConfig::new(method)
                .with_epsilon(cfg.epsilon)
                .with_tol(cfg.tol)
                .with_max_iters(cfg.max_iters)
                .with_target_error(cfg.target_error);
            let run = run_solver(&prob, &y0, &solver, Some(&x_star))?;
            let iterations = run.trace.first_below_error(cfg.target_error).map(|r| r.t);
            Ok(HistogramRow {
                realization,
                seed,
                degree,
                method,
                iterations,
                exchanges: iterations.map(|t| method.exchanges_per_iteration() * t as u64),
            })
        })
        .collect()
}

/// Independent realizations, each seeded with `seed + index`, run in
/// parallel. Rows are ordered by realization, then method.
pub fn run_histogram(cfg: &ExperimentConfig) -> Result<HistogramResult> {
    expect_scenario(cfg, &[Scenario::QuadraticHistogram])?;
    let per_realization: Vec<Vec<HistogramRow>> =
        (0..cfg.realizations).into_par_iter().map(|r| histogram_realization(cfg, r)).collect::<Result<_>>()?;
    let rows: Vec<HistogramRow> = per_realization.into_iter().flatten().collect();
    let summary = methods(cfg)
        .into_iter()
        .map(|method| {
            let mine: Vec<&HistogramRow> = rows.iter().filter(|r| r.method == method).collect();
            let done: Vec<&HistogramRow> = mine.iter().copied().filter(|r| r.iterations.is_some()).collect();
            let (mean_iterations, median_iterations) =
                mean_median(done.iter().map(|r| r.iterations.unwrap() as f64).collect());
            let (mean_exchanges, median_exchanges) =
                mean_median(done.iter().map(|r| r.exchanges.unwrap() as f64).collect());
            HistogramSummary {
                method,
                converged: done.len(),
                censored: mine.len() - done.len(),
                mean_iterations,
                median_iterations,
                mean_exchanges,
                median_exchanges,
            }
        })
        .collect();
    Ok(HistogramResult { rows, summary })
}

#[derive(Debug, Clone)]
pub struct AnnRun {
    pub alpha0: f64,
    pub method: Method,
    /// `None` when the run diverged; see `divergence`.
    pub outcome: Option<AnnOutcome>,
    pub divergence: Option<String>,
}

impl AnnRun {
    /// First iteration whose relative error is below `target`; `None` if the
    /// target was never reached or the run diverged.
    pub fn iterations_to(&self, target: f64) -> Option<usize> {
        self.outcome.as_ref()?.trace.first_below_error(target).map(|r| r.t)
    }
}

#[derive(Debug, Clone)]
pub struct AnnSweepResult {
    pub x_star: DVector<f64>,
    pub runs: Vec<AnnRun>,
}

impl AnnSweepResult {
    pub fn run(&self, alpha0: f64, method: Method) -> Option<&AnnRun> {
        self.runs.iter().find(|r| r.alpha0 == alpha0 && r.method == method)
    }
}

/// Adaptive runs of every selected method for every `alpha0` on the quadratic
/// instance of the config. A diverging run is recorded and the sweep goes on.
pub fn run_ann_sweep(cfg: &ExperimentConfig) -> Result<AnnSweepResult> {
    expect_scenario(cfg, &[Scenario::AnnSweep])?;
    let (prob, x_star) = quadratic_instance(cfg)?;
    let y0 = StackedIterate::zeros(cfg.n, cfg.p);
    let mut runs = Vec::new();
    for &alpha0 in &cfg.alpha0_list {
        for method in methods(cfg) {
            let ann = AnnConfig {
                alpha0,
                eta: cfg.eta,
                tol: cfg.tol,
                method,
                epsilon: cfg.epsilon,
                outer_rounds: cfg.outer_rounds,
                max_iters_per_stage: cfg.max_iters_per_stage,
            };
            let run = match ann_run(&prob, &y0, &ann, Some(&x_star)) {
                Ok(outcome) => {
                    info!("adaptive {method}, alpha0 = {alpha0:e}: {} iterations", outcome.trace.iterations());
                    AnnRun { alpha0, method, outcome: Some(outcome), divergence: None }
                }
                Err(err @ Error::Diverged { .. }) => {
                    warn!("adaptive {method}, alpha0 = {alpha0:e}: {err}");
                    AnnRun { alpha0, method, outcome: None, divergence: Some(err.to_string()) }
                }
                Err(err) => return Err(err),
            };
            runs.push(run);
        }
    }
    Ok(AnnSweepResult { x_star, runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario) -> ExperimentConfig {
        ExperimentConfig { n: 12, max_iters: 50, realizations: 3, ..ExperimentConfig::defaults(scenario) }
    }

    #[test]
    fn method_order() {
        let cfg = ExperimentConfig::defaults(Scenario::QuadraticFixed);
        assert_eq!(
            methods(&cfg),
            vec![Method::Dgd, Method::NetworkNewton(0), Method::NetworkNewton(1), Method::NetworkNewton(2)]
        );
    }

    #[test]
    fn wrong_scenario_rejected() {
        assert!(run_histogram(&small(Scenario::QuadraticFixed)).is_err());
        assert!(run_logistic(&small(Scenario::AnnSweep)).is_err());
    }

    #[test]
    fn single_realization_summary_equals_row() {
        let cfg = ExperimentConfig { realizations: 1, target_error: 0.5, ..small(Scenario::QuadraticHistogram) };
        let res = run_histogram(&cfg).unwrap();
        assert_eq!(res.rows.len(), methods(&cfg).len());
        for row in &res.rows {
            let s = res.summary_for(row.method).unwrap();
            assert_eq!(s.mean_iterations, row.iterations.map(|t| t as f64));
            assert_eq!(s.median_exchanges, row.exchanges.map(|e| e as f64));
            assert_eq!(s.converged + s.censored, 1);
        }
    }

    #[test]
    fn histogram_is_order_independent_of_threads() {
        let cfg = ExperimentConfig { target_error: 0.5, ..small(Scenario::QuadraticHistogram) };
        let a = run_histogram(&cfg).unwrap();
        let b = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_histogram(&cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn centralized_minimizer_matches_quadratic_optimum() {
        let (prob, x_star) = quadratic_instance(&small(Scenario::QuadraticFixed)).unwrap();
        let x = centralized_minimizer(prob.objectives(), 1e-12, 50).unwrap();
        assert!((x - x_star).norm() < 1e-10);
    }
}
