//! Outer iterations: the DGD baseline, the NN-K update and the tolerance loop.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{relative_error, CommLedger};
use crate::objectives::LocalObjective;
use crate::penalty::{PenalizedProblem, SplitBlocks, StackedIterate};

/// Number of consecutive increases of `F` treated as divergence.
pub const DIVERGENCE_STREAK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Unit-step gradient descent on `F`.
    Dgd,
    /// Network Newton with truncation order `K`.
    NetworkNewton(usize),
}

impl Method {
    /// Neighbor exchange rounds per iteration: 1 for DGD, `K + 1` for NN-K.
    pub fn exchanges_per_iteration(self) -> u64 {
        match self {
            Method::Dgd => 1,
            Method::NetworkNewton(k) => k as u64 + 1,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Dgd => write!(f, "DGD"),
            Method::NetworkNewton(k) => write!(f, "NN-{k}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if lower == "dgd" {
            return Ok(Method::Dgd);
        }
        lower
            .strip_prefix("nn-")
            .or_else(|| lower.strip_prefix("nn"))
            .and_then(|k| k.parse().ok())
            .map(Method::NetworkNewton)
            .ok_or_else(|| Error::Parameter(format!("unknown method {s:?} (expected DGD or NN-K)")))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// Stepsize of the NN-K update; DGD always takes the unit step.
    pub epsilon: f64,
    /// Stop once every local gradient norm is below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Optional extra stop once the relative error drops below this value.
    pub target_error: Option<f64>,
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        Self { method, epsilon: 1.0, tol: 1e-8, max_iters: 1000, target_error: None }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_target_error(mut self, target: f64) -> Self {
        self.target_error = Some(target);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Parameter(format!("stepsize must lie in (0, 1], got {}", self.epsilon)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("tolerance must be > 0, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Parameter("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// State after iteration `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    /// Cumulative directed vector sends.
    pub comm_sends: u64,
    pub f_value: f64,
    /// `||g_t||`.
    pub grad_norm: f64,
    /// `||D_{t-1}^{-1/2} g_t||`; at `t = 0` the block matrix at `y_0` is used.
    pub weighted_grad_norm: f64,
    pub rel_error: Option<f64>,
    pub alpha: f64,
    /// Adaptive stage index; 0 for plain runs.
    pub stage: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<IterationRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("trace holds the initial state")
    }

    /// Iterations performed (records minus the initial state).
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    /// First record whose relative error is strictly below `target`.
    pub fn first_below_error(&self, target: f64) -> Option<&IterationRecord> {
        self.records.iter().find(|r| r.rel_error.is_some_and(|e| e < target))
    }

    /// First record whose objective value is at most `target`.
    pub fn first_below_value(&self, target: f64) -> Option<&IterationRecord> {
        self.records.iter().find(|r| r.f_value <= target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    TargetError,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct SolverOutcome {
    pub trace: Trace,
    pub y_final: StackedIterate,
    pub stop: StopReason,
    pub ledger: CommLedger,
}

/// `y' = y - g(y)`, i.e. `x_i' = w_ii x_i + sum_j w_ij x_j - alpha grad f_i(x_i)`.
pub fn dgd_step<O: LocalObjective>(prob: &PenalizedProblem<O>, y: &StackedIterate) -> Result<StackedIterate> {
    let g = prob.gradient(y)?;
    Ok(y.sub(&g))
}

/// `x_i' = x_i + epsilon d_i^(K)`.
pub fn nn_step<O: LocalObjective>(
    prob: &PenalizedProblem<O>,
    y: &StackedIterate,
    order: usize,
    epsilon: f64,
) -> Result<StackedIterate> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Parameter(format!("stepsize must lie in (0, 1], got {epsilon}")));
    }
    let d = prob.nn_direction(y, order)?;
    let mut next = y.clone();
    next.axpy(epsilon, d.direction());
    Ok(next)
}

/// Stepsize guaranteeing linear convergence of NN-K:
/// `min{1, [3 m lambda^{5/2} / (L Lambda^3 (F(y0) - F*)^{1/2})]^{1/2}}`.
///
/// With `L = 0` or a zero optimality gap the second operand is infinite.
pub fn stepsize_rule(m: f64, lipschitz: f64, lambda: f64, upper_lambda: f64, gap: f64) -> Result<f64> {
    for (name, v) in [("m", m), ("lambda", lambda), ("Lambda", upper_lambda)] {
        if !(v > 0.0) {
            return Err(Error::Parameter(format!("{name} must be > 0, got {v}")));
        }
    }
    if !(lipschitz >= 0.0) || !(gap >= 0.0) {
        return Err(Error::Parameter("L and F(y0) - F* must be nonnegative".into()));
    }
    if lipschitz == 0.0 || gap == 0.0 {
        return Ok(1.0);
    }
    let ratio = 3.0 * m * lambda.powf(2.5) / (lipschitz * upper_lambda.powi(3) * gap.sqrt());
    Ok(ratio.sqrt().min(1.0))
}

/// Iterate state shared by the plain and adaptive drivers.
pub(crate) struct Runner<'p, O> {
    prob: &'p PenalizedProblem<O>,
    method: Method,
    epsilon: f64,
    constant_d: bool,
    y: StackedIterate,
    g: StackedIterate,
    g_sends: u64,
    split: SplitBlocks,
    weighted: f64,
    value: f64,
}

impl<'p, O: LocalObjective> Runner<'p, O> {
    pub(crate) fn new(prob: &'p PenalizedProblem<O>, y0: StackedIterate, method: Method, epsilon: f64) -> Result<Self> {
        let (g, g_sends) = prob.exchange_gradient(&y0)?;
        let split = prob.split(&y0)?;
        let weighted = split.weighted_norm(&g);
        let value = prob.value(&y0)?;
        Ok(Self {
            prob,
            method,
            epsilon,
            constant_d: prob.constant_hessian(),
            y: y0,
            g,
            g_sends,
            split,
            weighted,
            value,
        })
    }

    /// Advance one iteration; returns the directed sends it cost.
    pub(crate) fn step(&mut self) -> Result<u64> {
        let mut sends = self.g_sends;
        match self.method {
            Method::Dgd => self.y.axpy(-1.0, &self.g),
            Method::NetworkNewton(k) => {
                let dir = self.split.direction(&self.g, k);
                sends += dir.sends;
                self.y.axpy(self.epsilon, dir.direction());
            }
        }
        let (g, g_sends) = self.prob.exchange_gradient(&self.y)?;
        self.weighted = self.split.weighted_norm(&g);
        self.g = g;
        self.g_sends = g_sends;
        if !self.constant_d {
            self.split = self.prob.split(&self.y)?;
        }
        self.value = self.prob.value(&self.y)?;
        Ok(sends)
    }

    pub(crate) fn all_local_below(&self, tol: f64) -> bool {
        self.g.blocks().iter().all(|b| b.norm() < tol)
    }

    pub(crate) fn nodes_below(&self, tol: f64) -> Vec<usize> {
        (0..self.g.n()).filter(|&i| self.g.block(i).norm() < tol).collect()
    }

    pub(crate) fn value(&self) -> f64 {
        self.value
    }

    pub(crate) fn into_y(self) -> StackedIterate {
        self.y
    }

    pub(crate) fn record(&self, t: usize, comm_sends: u64, stage: usize, x_star: Option<&DVector<f64>>) -> Result<IterationRecord> {
        Ok(IterationRecord {
            t,
            comm_sends,
            f_value: self.value,
            grad_norm: self.g.norm(),
            weighted_grad_norm: self.weighted,
            rel_error: x_star.map(|x| relative_error(&self.y, x)).transpose()?,
            alpha: self.prob.alpha(),
            stage,
        })
    }
}

/// Tracks consecutive increases of `F`.
#[derive(Debug, Default)]
pub(crate) struct DivergenceGuard {
    streak: usize,
}

impl DivergenceGuard {
    pub(crate) fn observe(&mut self, method: Method, t: usize, prev: f64, next: f64) -> Result<()> {
        if next > prev || next.is_nan() {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        if self.streak >= DIVERGENCE_STREAK || !next.is_finite() {
            return Err(Error::Diverged { method: method.to_string(), iteration: t, streak: self.streak, value: next });
        }
        Ok(())
    }
}

/// Run DGD or NN-K from `y0` until every local gradient norm is below
/// `cfg.tol`, the optional target error is met, or `cfg.max_iters` is hit.
///
/// At least one iteration is always executed. The trace holds the initial
/// state at `t = 0` and one record per iteration. `x_star`, when given, is
/// used for the relative-error column.
pub fn run_solver<O: LocalObjective>(
    prob: &PenalizedProblem<O>,
    y0: &StackedIterate,
    cfg: &SolverConfig,
    x_star: Option<&DVector<f64>>,
) -> Result<SolverOutcome> {
    cfg.validate()?;
    let mut runner = Runner::new(prob, y0.clone(), cfg.method, cfg.epsilon)?;
    let mut ledger = CommLedger::new();
    let mut guard = DivergenceGuard::default();
    let mut records = vec![runner.record(0, 0, 0, x_star)?];

    let mut t = 0;
    let stop = loop {
        let prev = runner.value();
        ledger.record(runner.step()?);
        t += 1;
        guard.observe(cfg.method, t, prev, runner.value())?;
        let rec = runner.record(t, ledger.total(), 0, x_star)?;
        let hit_target = matches!((cfg.target_error, rec.rel_error), (Some(target), Some(e)) if e < target);
        records.push(rec);
        if runner.all_local_below(cfg.tol) {
            break StopReason::Tolerance;
        }
        if hit_target {
            break StopReason::TargetError;
        }
        if t >= cfg.max_iters {
            break StopReason::MaxIters;
        }
    };

    Ok(SolverOutcome { trace: Trace { records }, y_final: runner.into_y(), stop, ledger })
}

/// High-accuracy minimizer of `F` by damped Newton steps whose linear systems
/// are solved with conjugate gradients preconditioned by `D`.
///
/// Only blockwise Hessian products are used. Quadratics converge in one outer
/// step. Returns the last iterate when `tol` on `||g||` is met or progress
/// stalls.
pub fn reference_solve<O: LocalObjective>(
    prob: &PenalizedProblem<O>,
    y0: &StackedIterate,
    tol: f64,
    max_newton: usize,
) -> Result<StackedIterate> {
    let mut y = y0.clone();
    let mut f = prob.value(&y)?;
    for _ in 0..max_newton {
        let g = prob.gradient(&y)?;
        let gnorm = g.norm();
        if gnorm <= tol {
            break;
        }
        let hessians = prob.local_hessians(&y)?;
        let split = prob.split_from_hessians(hessians.clone())?;
        let rhs = g.scaled(-1.0);
        let d = preconditioned_cg(prob, &hessians, &split, &rhs, 1e-3 * tol.min(gnorm), 20 * y.n() * y.p());
        let slope = g.dot(&d);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = y.clone();
            trial.axpy(step, &d);
            let ft = prob.value(&trial)?;
            if ft <= f + 1e-4 * step * slope || (step == 1.0 && prob.constant_hessian()) {
                y = trial;
                f = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(y)
}

fn preconditioned_cg<O: LocalObjective>(
    prob: &PenalizedProblem<O>,
    hessians: &[nalgebra::DMatrix<f64>],
    precond: &SplitBlocks,
    rhs: &StackedIterate,
    abs_tol: f64,
    max_iters: usize,
) -> StackedIterate {
    let apply_precond = |r: &StackedIterate| {
        StackedIterate::from_blocks((0..r.n()).map(|i| precond.solve(i, r.block(i))).collect())
            .expect("same shape as residual")
    };
    let mut x = StackedIterate::zeros(rhs.n(), rhs.p());
    let mut r = rhs.clone();
    let mut z = apply_precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iters {
        if r.norm() <= abs_tol {
            break;
        }
        let hp = prob.apply_hessian(hessians, &p);
        let curv = p.dot(&hp);
        if curv <= 0.0 {
            break;
        }
        let a = rz / curv;
        x.axpy(a, &p);
        r.axpy(-a, &hp);
        z = apply_precond(&r);
        let rz_next = r.dot(&z);
        let beta = rz_next / rz;
        rz = rz_next;
        let mut next_p = z.clone();
        next_p.axpy(beta, &p);
        p = next_p;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{generate_quadratic, quadratic_optimum, DiagonalQuadratic, QuadraticEnsembleConfig};
    use crate::topology::{Topology, WeightMatrix};

    fn problem(n: usize, alpha: f64, seed: u64) -> (PenalizedProblem<DiagonalQuadratic>, DVector<f64>) {
        let fs = generate_quadratic(n, &QuadraticEnsembleConfig { p: 4, xi: 2, seed }).unwrap();
        let x = quadratic_optimum(&fs).unwrap();
        let topo = Topology::d_regular_cycle(n, 4).unwrap();
        let w = WeightMatrix::cycle(&topo, 4).unwrap();
        (PenalizedProblem::new(topo, w, fs, alpha).unwrap(), x)
    }

    #[test]
    fn method_parsing() {
        assert_eq!("DGD".parse::<Method>().unwrap(), Method::Dgd);
        assert_eq!("nn-2".parse::<Method>().unwrap(), Method::NetworkNewton(2));
        assert_eq!("NN0".parse::<Method>().unwrap(), Method::NetworkNewton(0));
        assert!("newton".parse::<Method>().is_err());
        assert_eq!(Method::NetworkNewton(1).to_string(), "NN-1");
    }

    #[test]
    fn stepsize_rule_cases() {
        assert_eq!(stepsize_rule(0.1, 0.0, 0.5, 2.0, 10.0).unwrap(), 1.0);
        assert_eq!(stepsize_rule(0.1, 3.0, 0.5, 2.0, 0.0).unwrap(), 1.0);
        // 3 * 0.01 * 0.25^2.5 / (50 * 8 * sqrt(4)) = 1.171875e-6, sqrt = 1.0825e-3
        let eps = stepsize_rule(0.01, 50.0, 0.25, 2.0, 4.0).unwrap();
        assert!((eps - 1.171875e-6f64.sqrt()).abs() < 1e-15);
        assert!(stepsize_rule(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(stepsize_rule(1.0, 1.0, -1.0, 1.0, 1.0).is_err());
        assert!(stepsize_rule(1.0, 1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn fixed_point_when_gradient_vanishes() {
        let (prob, _) = problem(8, 0.05, 3);
        let y_star = reference_solve(&prob, &StackedIterate::zeros(8, 4), 1e-12, 5).unwrap();
        assert!(prob.gradient(&y_star).unwrap().norm() < 1e-11);
        let d = dgd_step(&prob, &y_star).unwrap();
        assert!(d.sub(&y_star).norm() < 1e-11);
        let n = nn_step(&prob, &y_star, 2, 1.0).unwrap();
        assert!(n.sub(&y_star).norm() < 1e-9);
    }

    #[test]
    fn dgd_descends_from_consensus() {
        let (prob, _) = problem(8, 0.01, 4);
        let y = StackedIterate::consensus(8, &DVector::from_element(4, 0.5));
        let next = dgd_step(&prob, &y).unwrap();
        assert!(next.sub(&y).norm() > 0.0);
        assert!(prob.value(&next).unwrap() < prob.value(&y).unwrap());
    }

    #[test]
    fn at_least_one_iteration() {
        let (prob, x) = problem(8, 0.01, 5);
        let y0 = StackedIterate::consensus(8, &x);
        let cfg = SolverConfig::new(Method::NetworkNewton(1)).with_tol(1e6);
        let out = run_solver(&prob, &y0, &cfg, Some(&x)).unwrap();
        assert_eq!(out.trace.iterations(), 1);
        assert_eq!(out.stop, StopReason::Tolerance);
        assert_eq!(out.trace.records[0].rel_error, Some(0.0));
    }

    #[test]
    fn ledger_matches_closed_form() {
        let (prob, x) = problem(10, 0.01, 6);
        for method in [Method::Dgd, Method::NetworkNewton(0), Method::NetworkNewton(2)] {
            let cfg = SolverConfig::new(method).with_max_iters(17).with_tol(1e-30);
            let out = run_solver(&prob, &StackedIterate::zeros(10, 4), &cfg, Some(&x)).unwrap();
            assert_eq!(out.trace.iterations(), 17);
            let expect = crate::metrics::comm_cost(method, 17, prob.topology());
            assert_eq!(out.ledger.total(), expect);
            assert_eq!(out.trace.last().comm_sends, expect);
            assert!(out.trace.records.windows(2).all(|w| w[0].comm_sends <= w[1].comm_sends));
        }
    }

    #[test]
    fn target_error_stops_early() {
        let (prob, x) = problem(10, 0.01, 7);
        let cfg = SolverConfig::new(Method::NetworkNewton(1)).with_max_iters(5000).with_tol(1e-30).with_target_error(0.5);
        let out = run_solver(&prob, &StackedIterate::zeros(10, 4), &cfg, Some(&x)).unwrap();
        assert_eq!(out.stop, StopReason::TargetError);
        assert!(out.trace.last().rel_error.unwrap() < 0.5);
        assert!(out.trace.records[out.trace.len() - 2].rel_error.unwrap() >= 0.5);
    }

    #[test]
    fn invalid_configs_rejected() {
        let (prob, _) = problem(6, 0.01, 8);
        let y0 = StackedIterate::zeros(6, 4);
        for cfg in [
            SolverConfig::new(Method::Dgd).with_epsilon(0.0),
            SolverConfig::new(Method::Dgd).with_epsilon(1.5),
            SolverConfig::new(Method::Dgd).with_tol(0.0),
            SolverConfig::new(Method::Dgd).with_max_iters(0),
        ] {
            assert!(run_solver(&prob, &y0, &cfg, None).is_err());
        }
    }

    #[test]
    fn divergence_is_reported() {
        // Weights with a very negative eigenvalue make unit-step DGD unstable.
        let topo = Topology::from_edges(2, &[(0, 1)]).unwrap();
        let w = WeightMatrix::from_dense(nalgebra::DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let fs = vec![DiagonalQuadratic::new(DVector::from_element(1, 1.0), DVector::from_element(1, 1.0)).unwrap(); 2];
        let prob = PenalizedProblem::new(topo, w, fs, 1.0).unwrap();
        let y0 = StackedIterate::from_flat(&[1.0, -1.0], 1).unwrap();
        let err = run_solver(&prob, &y0, &SolverConfig::new(Method::Dgd).with_max_iters(500), None).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }
}
