//! Adaptive network Newton: NN-K (or DGD) stages with `alpha` shrunk by a
//! factor `eta` whenever every agent has signaled local convergence.

use log::warn;
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::metrics::CommLedger;
use crate::objectives::LocalObjective;
use crate::penalty::{PenalizedProblem, StackedIterate};
use crate::solvers::{DivergenceGuard, Method, Runner, Trace};

#[derive(Debug, Clone, PartialEq)]
pub struct AnnConfig {
    pub alpha0: f64,
    /// Reduction factor, `0 < eta < 1`.
    pub eta: f64,
    /// Per-stage local gradient tolerance.
    pub tol: f64,
    pub method: Method,
    pub epsilon: f64,
    /// Number of stages, i.e. distinct values of `alpha`.
    pub outer_rounds: usize,
    pub max_iters_per_stage: usize,
}

impl AnnConfig {
    pub fn new(method: Method, alpha0: f64) -> Self {
        Self { alpha0, eta: 0.1, tol: 1e-3, method, epsilon: 1.0, outer_rounds: 3, max_iters_per_stage: 5000 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0) {
            return Err(Error::Parameter(format!("alpha0 must be > 0, got {}", self.alpha0)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Parameter(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Parameter(format!("stepsize must lie in (0, 1], got {}", self.epsilon)));
        }
        if self.outer_rounds == 0 {
            return Err(Error::Parameter("outer_rounds must be >= 1".into()));
        }
        if self.max_iters_per_stage == 0 {
            return Err(Error::Parameter("max_iters_per_stage must be >= 1".into()));
        }
        Ok(())
    }

    /// `alpha0 * eta^s` for every stage.
    pub fn alphas(&self) -> Vec<f64> {
        let mut a = self.alpha0;
        (0..self.outer_rounds)
            .map(|_| {
                let cur = a;
                a *= self.eta;
                cur
            })
            .collect()
    }
}

/// Completion flags: row `i` holds node `i`'s view `s_i1, ..., s_in`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalState {
    flags: Vec<Vec<bool>>,
}

impl SignalState {
    pub fn new(n: usize) -> Self {
        Self { flags: vec![vec![false; n]; n] }
    }

    pub fn n(&self) -> usize {
        self.flags.len()
    }

    pub fn flag(&self, i: usize, j: usize) -> bool {
        self.flags[i][j]
    }

    /// Nodes in `completed` set their own flag and broadcast it; every node
    /// then records the signals it received. Broadcasts arrive within the
    /// round. Returns true once every flag is set.
    pub fn signal_round(&mut self, completed: &[usize]) -> bool {
        let n = self.n();
        for &j in completed {
            assert!(j < n, "node {j} out of range");
            self.flags[j][j] = true;
        }
        for j in 0..n {
            if self.flags[j][j] {
                for i in 0..n {
                    self.flags[i][j] = true;
                }
            }
        }
        self.all_set()
    }

    pub fn all_set(&self) -> bool {
        self.flags.iter().all(|row| row.iter().all(|&f| f))
    }

    pub fn reset(&mut self) {
        for row in &mut self.flags {
            row.iter_mut().for_each(|f| *f = false);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub stage: usize,
    pub alpha: f64,
    /// Trace index of the stage's first iteration.
    pub first_t: usize,
    /// Trace index of the stage's last record.
    pub last_t: usize,
    /// True if the stage stopped at `max_iters_per_stage` without all flags.
    pub hit_cap: bool,
    pub final_rel_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AnnOutcome {
    pub trace: Trace,
    pub stages: Vec<StageSummary>,
    pub y_final: StackedIterate,
    pub ledger: CommLedger,
}

/// Run the adaptive scheme from `y0`, warm-starting each stage at the
/// previous stage's final iterate. `template` supplies network and
/// objectives; its own `alpha` is ignored.
///
/// Within a stage every round ends with a signaling step in which the nodes
/// whose local gradient norm is below `tol` report completion. Flags persist
/// until `alpha` is reduced, so a stage ends once each node has reported at
/// least once. Every stage runs at least one iteration.
pub fn ann_run<O: LocalObjective>(
    template: &PenalizedProblem<O>,
    y0: &StackedIterate,
    cfg: &AnnConfig,
    x_star: Option<&DVector<f64>>,
) -> Result<AnnOutcome> {
    cfg.validate()?;
    let mut ledger = CommLedger::new();
    let mut records = Vec::new();
    let mut stages = Vec::with_capacity(cfg.outer_rounds);
    let mut y = y0.clone();
    let mut t = 0usize;

    for (stage, alpha) in cfg.alphas().into_iter().enumerate() {
        let prob = template.with_alpha(alpha)?;
        let mut runner = Runner::new(&prob, y, cfg.method, cfg.epsilon)?;
        let mut signals = SignalState::new(prob.n());
        let mut guard = DivergenceGuard::default();
        if stage == 0 {
            records.push(runner.record(0, 0, 0, x_star)?);
        }
        let first_t = t + 1;
        let mut iters = 0;
        let hit_cap = loop {
            let prev = runner.value();
            ledger.record(runner.step()?);
            t += 1;
            iters += 1;
            guard.observe(cfg.method, t, prev, runner.value())?;
            records.push(runner.record(t, ledger.total(), stage, x_star)?);
            if signals.signal_round(&runner.nodes_below(cfg.tol)) {
                break false;
            }
            if iters >= cfg.max_iters_per_stage {
                warn!("stage {stage} (alpha = {alpha:e}) reached the cap of {iters} iterations");
                break true;
            }
        };
        stages.push(StageSummary {
            stage,
            alpha,
            first_t,
            last_t: t,
            hit_cap,
            final_rel_error: records.last().and_then(|r| r.rel_error),
        });
        y = runner.into_y();
    }

    Ok(AnnOutcome { trace: Trace { records }, stages, y_final: y, ledger })
}
