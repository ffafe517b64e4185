//! Experiment drivers, CSV output and configuration.
//!
//! [`run_scenario`] runs whatever scenario a config selects and writes all of
//! its outputs into one directory, together with `config.resolved.toml`, the
//! fully resolved configuration.

pub mod config;
pub mod csv;
pub mod experiments;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{ExperimentConfig, Scenario};
pub use csv::{read_trace, trace_from_csv, trace_to_csv, write_trace, TRACE_HEADER};
pub use experiments::{
    centralized_minimizer, logistic_dataset, logistic_instance, methods, quadratic_instance, run_ann_sweep,
    run_fixed_quadratic, run_histogram, run_logistic, theory_constants, AnnRun, AnnSweepResult, FixedResult,
    HistogramResult, HistogramRow, HistogramSummary, MethodRun,
};

use crate::error::Result;
use crate::objectives::{check_derivatives, LocalObjective};
use crate::penalty::{PenalizedProblem, StackedIterate};
use crate::solvers::Method;
use crate::topology::{Topology, WeightMatrix};

/// Name of the resolved-config snapshot written next to every run.
pub const CONFIG_SNAPSHOT: &str = "config.resolved.toml";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// File name of a method's trace, e.g. `trace_NN-1.csv`.
pub fn trace_file_name(method: Method) -> String {
    format!("trace_{method}.csv")
}

/// File name of an adaptive trace, e.g. `ann_alpha0_0.1_NN-1.csv`.
pub fn ann_trace_file_name(alpha0: f64, method: Method) -> String {
    format!("ann_alpha0_{alpha0}_{method}.csv")
}

/// One line per method: iterations run, final values, and the first
/// iteration reaching the relative-error target and DGD's final `F`.
pub fn fixed_summary_csv(result: &FixedResult, target_error: f64) -> String {
    let dgd_final = result.run(Method::Dgd).map(|r| r.outcome.trace.last().f_value);
    let mut out = String::from(
        "method,iterations,final_F,F_star,final_rel_error,iters_to_target,sends_to_target,iters_to_dgd_final_F,sends_to_dgd_final_F\n",
    );
    for run in &result.runs {
        let trace = &run.outcome.trace;
        let last = trace.last();
        let hit = trace.first_below_error(target_error);
        let matched = dgd_final.and_then(|f| trace.first_below_value(f));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            run.method,
            trace.iterations(),
            last.f_value,
            result.f_star,
            opt(last.rel_error),
            opt(hit.map(|r| r.t)),
            opt(hit.map(|r| r.comm_sends)),
            opt(matched.map(|r| r.t)),
            opt(matched.map(|r| r.comm_sends)),
        );
    }
    out
}

pub fn theory_constants_csv(result: &FixedResult) -> String {
    let mut out = String::from("method,rho,lambda,Lambda,zeta,gamma1,gamma2,epsilon,t0,rate_bound_evaluated,violations\n");
    for run in &result.runs {
        let (Some(c), Some(d)) = (&run.constants, &run.diagnostics) else { continue };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            run.method,
            c.rho,
            c.lambda,
            c.upper_lambda,
            c.zeta,
            c.gamma1,
            c.gamma2,
            c.epsilon,
            opt(c.t0()),
            d.evaluated as u8,
            d.violations()
        );
    }
    out
}

pub fn histogram_rows_csv(result: &HistogramResult) -> String {
    let mut out = String::from("realization,seed,degree,method,iterations,exchanges,censored\n");
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.realization,
            r.seed,
            r.degree,
            r.method,
            opt(r.iterations),
            opt(r.exchanges),
            r.iterations.is_none() as u8
        );
    }
    out
}

pub fn histogram_summary_csv(result: &HistogramResult) -> String {
    let mut out = String::from(
        "method,converged,censored,mean_iterations,median_iterations,mean_exchanges,median_exchanges\n",
    );
    for s in &result.summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.method,
            s.converged,
            s.censored,
            opt(s.mean_iterations),
            opt(s.median_iterations),
            opt(s.mean_exchanges),
            opt(s.median_exchanges)
        );
    }
    out
}

pub fn ann_stages_csv(result: &AnnSweepResult) -> String {
    let mut out = String::from("alpha0,method,stage,alpha,first_iter,last_iter,hit_cap,final_rel_error\n");
    for run in &result.runs {
        let Some(outcome) = &run.outcome else { continue };
        for s in &outcome.stages {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                run.alpha0,
                run.method,
                s.stage,
                s.alpha,
                s.first_t,
                s.last_t,
                s.hit_cap as u8,
                opt(s.final_rel_error)
            );
        }
    }
    out
}

pub fn ann_summary_csv(result: &AnnSweepResult, target_error: f64) -> String {
    let mut out = String::from("alpha0,method,status,iterations,final_rel_error,iters_to_target,sends_to_target\n");
    for run in &result.runs {
        let Some(outcome) = &run.outcome else {
            let _ = writeln!(out, "{},{},diverged,,,,", run.alpha0, run.method);
            continue;
        };
        let trace = &outcome.trace;
        let hit = trace.first_below_error(target_error);
        let _ = writeln!(
            out,
            "{},{},ok,{},{},{},{}",
            run.alpha0,
            run.method,
            trace.iterations(),
            opt(trace.last().rel_error),
            opt(hit.map(|r| r.t)),
            opt(hit.map(|r| r.comm_sends))
        );
    }
    out
}

/// Everything a scenario produced, for callers that want more than files.
#[derive(Debug, Clone)]
pub enum ScenarioResult {
    Fixed(FixedResult),
    Histogram(HistogramResult),
    Ann(AnnSweepResult),
}

fn write_file(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    written.push(path);
    Ok(())
}

/// Write the outputs of a finished scenario into `dir` (created if needed).
/// Returns the paths written, snapshot first.
pub fn write_outputs(cfg: &ExperimentConfig, result: &ScenarioResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    write_file(dir, CONFIG_SNAPSHOT, &cfg.to_toml_string(), &mut written)?;
    match result {
        ScenarioResult::Fixed(res) => {
            for run in &res.runs {
                write_file(dir, &trace_file_name(run.method), &trace_to_csv(&run.outcome.trace), &mut written)?;
                if let Some(d) = &run.diagnostics {
                    write_file(dir, &format!("diagnostics_{}.csv", run.method), &d.to_csv(), &mut written)?;
                }
            }
            write_file(dir, "summary.csv", &fixed_summary_csv(res, cfg.target_error), &mut written)?;
            write_file(dir, "theory_constants.csv", &theory_constants_csv(res), &mut written)?;
        }
        ScenarioResult::Histogram(res) => {
            write_file(dir, "histogram_rows.csv", &histogram_rows_csv(res), &mut written)?;
            write_file(dir, "histogram_summary.csv", &histogram_summary_csv(res), &mut written)?;
        }
        ScenarioResult::Ann(res) => {
            for run in &res.runs {
                if let Some(outcome) = &run.outcome {
                    let name = ann_trace_file_name(run.alpha0, run.method);
                    write_file(dir, &name, &trace_to_csv(&outcome.trace), &mut written)?;
                }
            }
            write_file(dir, "ann_stages.csv", &ann_stages_csv(res), &mut written)?;
            write_file(dir, "ann_summary.csv", &ann_summary_csv(res, cfg.target_error), &mut written)?;
        }
    }
    Ok(written)
}

/// Run the scenario selected by `cfg` without writing anything.
pub fn execute(cfg: &ExperimentConfig) -> Result<ScenarioResult> {
    Ok(match cfg.scenario {
        Scenario::QuadraticFixed => ScenarioResult::Fixed(run_fixed_quadratic(cfg)?),
        Scenario::LogisticSeparable | Scenario::LogisticNonseparable => ScenarioResult::Fixed(run_logistic(cfg)?),
        Scenario::QuadraticHistogram => ScenarioResult::Histogram(run_histogram(cfg)?),
        Scenario::AnnSweep => ScenarioResult::Ann(run_ann_sweep(cfg)?),
    })
}

/// Run the scenario selected by `cfg` and write its outputs into `dir`.
pub fn run_scenario(cfg: &ExperimentConfig, dir: &Path) -> Result<(ScenarioResult, Vec<PathBuf>)> {
    let result = execute(cfg)?;
    let written = write_outputs(cfg, &result, dir)?;
    Ok((result, written))
}

/// Outcome of one self-check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Largest relative finite-difference error accepted by [`validate`].
pub const DERIVATIVE_TOL: f64 = 1e-5;

fn derivative_lines<O: LocalObjective>(label: &str, objectives: &[O], seed: u64) -> Result<CheckLine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for obj in objectives.iter().take(5) {
        let x = DVector::from_fn(obj.dim(), |_, _| rng.gen_range(-1.0..1.0));
        worst = worst.max(check_derivatives(obj, &x, 1e-5)?);
    }
    Ok(CheckLine {
        name: format!("{label} derivatives"),
        passed: worst < DERIVATIVE_TOL,
        detail: format!("max relative finite-difference error {worst:.3e}"),
    })
}

/// Blockwise consistency of the penalized problem at a random point: the
/// Hessian product equals `(D - B) v` and the gradient matches a central
/// difference of `F` along `v`.
fn splitting_line<O: LocalObjective>(label: &str, prob: &PenalizedProblem<O>, seed: u64) -> Result<CheckLine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = || {
        StackedIterate::from_blocks(
            (0..prob.n()).map(|_| DVector::from_fn(prob.p(), |_, _| rng.gen_range(-1.0..1.0))).collect(),
        )
    };
    let y = random()?;
    let v = random()?;
    let hessians = prob.local_hessians(&y)?;
    let hv = prob.apply_hessian(&hessians, &v);
    let split = prob.split_from_hessians(hessians)?;
    let mut dbv = StackedIterate::zeros(prob.n(), prob.p());
    for i in 0..prob.n() {
        let mut b = split.b_diag(i) * v.block(i);
        for &(j, w) in split.b_off(i) {
            b += w * v.block(j);
        }
        *dbv.block_mut(i) = split.d_block(i) * v.block(i) - b;
    }
    let split_err = hv.sub(&dbv).norm() / hv.norm().max(1.0);

    let h = 1e-6;
    let mut plus = y.clone();
    plus.axpy(h, &v);
    let mut minus = y.clone();
    minus.axpy(-h, &v);
    let fd = (prob.value(&plus)? - prob.value(&minus)?) / (2.0 * h);
    let exact = prob.gradient(&y)?.dot(&v);
    let grad_err = (fd - exact).abs() / exact.abs().max(1.0);
    Ok(CheckLine {
        name: format!("{label} penalized splitting"),
        passed: split_err < 1e-12 && grad_err < DERIVATIVE_TOL,
        detail: format!("|Hv - (D - B)v| = {split_err:.3e}, directional gradient error {grad_err:.3e}"),
    })
}

/// Weight-matrix checks for every network the config uses, finite-difference
/// checks of the local objectives, and blockwise splitting checks.
pub fn validate(cfg: &ExperimentConfig) -> Result<Vec<CheckLine>> {
    cfg.validate()?;
    let mut lines = Vec::new();
    let degrees = if cfg.scenario == Scenario::QuadraticHistogram { cfg.degree_set.clone() } else { vec![cfg.degree] };
    for d in degrees {
        let topo = Topology::d_regular_cycle(cfg.n, d)?;
        let w = WeightMatrix::cycle(&topo, d)?;
        let report = w.validate(&topo);
        lines.push(CheckLine {
            name: format!("weights n={} d={d}", cfg.n),
            passed: report.all_passed(),
            detail: report.to_string().replace('\n', "; "),
        });
    }
    if cfg.scenario.is_logistic() {
        let (prob, _) = logistic_instance(cfg)?;
        lines.push(derivative_lines("logistic", prob.objectives(), cfg.seed)?);
        lines.push(splitting_line("logistic", &prob, cfg.seed)?);
    } else {
        let degree = if cfg.scenario == Scenario::QuadraticHistogram { cfg.degree_set[0] } else { cfg.degree };
        let qcfg = ExperimentConfig { degree, ..cfg.clone() };
        let (prob, _) = quadratic_instance(&qcfg)?;
        lines.push(derivative_lines("quadratic", prob.objectives(), cfg.seed)?);
        lines.push(splitting_line("quadratic", &prob, cfg.seed)?);
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names() {
        assert_eq!(trace_file_name(Method::NetworkNewton(1)), "trace_NN-1.csv");
        assert_eq!(ann_trace_file_name(0.1, Method::Dgd), "ann_alpha0_0.1_DGD.csv");
    }

    #[test]
    fn validate_defaults_pass() {
        for sc in [Scenario::QuadraticFixed, Scenario::LogisticSeparable, Scenario::QuadraticHistogram] {
            let cfg = ExperimentConfig { n: 20, ..ExperimentConfig::defaults(sc) };
            for line in validate(&cfg).unwrap() {
                assert!(line.passed, "{}: {}", line.name, line.detail);
            }
        }
    }

    #[test]
    fn outputs_written_with_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { n: 10, max_iters: 20, ..ExperimentConfig::defaults(Scenario::QuadraticFixed) };
        let (_, written) = run_scenario(&cfg, dir.path()).unwrap();
        assert!(written[0].ends_with(CONFIG_SNAPSHOT));
        let snap = ExperimentConfig::load(&written[0]).unwrap();
        assert_eq!(snap, cfg);
        let t = read_trace(dir.path().join("trace_NN-2.csv")).unwrap();
        assert_eq!(t.iterations(), 20);
    }
}
