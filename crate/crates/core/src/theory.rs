//! Constants of the NN-K convergence analysis and empirical checks of the
//! resulting bounds along recorded traces.
//!
//! All checks are reports with a fixed absolute slack of [`BOUND_SLACK`]; they
//! never influence the solvers.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::objectives::LocalObjective;
use crate::penalty::{PenalizedProblem, StackedIterate};
use crate::solvers::Trace;

/// Absolute slack applied to every bound comparison.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryInputs {
    /// Smallest diagonal weight `delta`.
    pub delta: f64,
    /// Largest diagonal weight `Delta`.
    pub upper_delta: f64,
    pub alpha: f64,
    pub m: f64,
    pub big_m: f64,
    pub lipschitz: f64,
    pub epsilon: f64,
    /// Truncation order `K`.
    pub order: usize,
    /// `F(y_0) - F(y*)`.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryConstants {
    /// Upper bound on the spectrum of `D^{-1/2} B D^{-1/2}`.
    pub rho: f64,
    /// Lower eigenvalue bound of the approximate Hessian inverse.
    pub lambda: f64,
    /// Upper eigenvalue bound of the approximate Hessian inverse.
    pub upper_lambda: f64,
    /// Linear rate constant; the objective gap shrinks by `1 - zeta` per step.
    pub zeta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub epsilon: f64,
    pub order: usize,
}

/// Evaluate every constant of the analysis. A `zeta` outside `(0, 1)` is not
/// an error; see [`TheoryConstants::zeta_valid`].
pub fn compute_constants(inp: &TheoryInputs) -> Result<TheoryConstants> {
    let TheoryInputs { delta, upper_delta, alpha, m, big_m, lipschitz, epsilon, order, gap } = *inp;
    if !(0.0 <= delta && delta <= upper_delta && upper_delta < 1.0) {
        return Err(Error::Parameter(format!("need 0 <= delta <= Delta < 1, got {delta}, {upper_delta}")));
    }
    if !(m > 0.0 && m <= big_m && big_m.is_finite()) {
        return Err(Error::Parameter(format!("need 0 < m <= M < inf, got {m}, {big_m}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be > 0, got {alpha}")));
    }
    if !(lipschitz >= 0.0) || !(gap >= 0.0) {
        return Err(Error::Parameter("L and F(y0) - F* must be nonnegative".into()));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Parameter(format!("stepsize must lie in (0, 1], got {epsilon}")));
    }

    let two_low = 2.0 * (1.0 - delta);
    let two_high = 2.0 * (1.0 - upper_delta) + alpha * m;
    let rho = two_low / (two_low + alpha * m);
    let lambda = 1.0 / (two_low + alpha * big_m);
    let upper_lambda = (1.0 - rho.powi(order as i32 + 1)) / ((1.0 - rho) * two_high);
    let zeta = (2.0 - epsilon) * epsilon * alpha * m * lambda
        - alpha * epsilon.powi(3) * lipschitz * upper_lambda.powi(3) * gap.sqrt() / (6.0 * lambda.powf(1.5));
    let gamma1 = (alpha * epsilon * lipschitz * upper_lambda).sqrt() * gap.powf(0.25)
        / (lambda.powf(0.75) * two_high);
    let gamma2 = alpha * lipschitz * upper_lambda.powi(2) / (2.0 * lambda * two_high.sqrt());

    Ok(TheoryConstants { rho, lambda, upper_lambda, zeta, gamma1, gamma2, epsilon, order })
}

impl TheoryConstants {
    pub fn zeta_valid(&self) -> bool {
        self.zeta > 0.0 && self.zeta < 1.0
    }

    /// `1 - eps + eps rho^{K+1}`.
    pub fn linear_factor(&self) -> f64 {
        1.0 - self.epsilon + self.epsilon * self.rho.powi(self.order as i32 + 1)
    }

    /// `eta_t = (1 - eps + eps rho^{K+1}) (1 + Gamma1 (1 - zeta)^{(t-1)/4})`.
    pub fn eta(&self, t: u64) -> f64 {
        let decay = if self.gamma1 == 0.0 { 0.0 } else { (1.0 - self.zeta).powf((t as f64 - 1.0) / 4.0) };
        self.linear_factor() * (1.0 + self.gamma1 * decay)
    }

    /// First `t` with `eta_t < 1`, if any.
    pub fn t0(&self) -> Option<u64> {
        let c = self.linear_factor();
        if !(c < 1.0) {
            return None;
        }
        if self.eta(0) < 1.0 {
            return Some(0);
        }
        if !self.zeta_valid() {
            return None;
        }
        // Solve Gamma1 (1 - zeta)^{(t-1)/4} < 1/c - 1 for t, then settle the
        // integer boundary exactly.
        let r = (1.0 / c - 1.0) / self.gamma1;
        let est = 1.0 + 4.0 * r.ln() / (1.0 - self.zeta).ln();
        if !est.is_finite() || est > 1e18 {
            return None;
        }
        let mut t = est.floor().max(0.0) as u64;
        while t > 0 && self.eta(t - 1) < 1.0 {
            t -= 1;
        }
        while self.eta(t) >= 1.0 {
            t += 1;
        }
        Some(t)
    }
}

/// Range of `||D_{t-1}^{-1/2} g_t||` in which the quadratic rate applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseInterval {
    /// `eta_t >= 1`: before `t0`, no quadratic phase.
    Empty,
    /// `Gamma2 = 0`: there is no quadratic term, the contraction is linear.
    Unbounded,
    Bounded { lower: f64, upper: f64 },
}

impl PhaseInterval {
    pub fn contains(&self, v: f64) -> bool {
        match *self {
            PhaseInterval::Bounded { lower, upper } => lower <= v && v < upper,
            _ => false,
        }
    }
}

/// `[sqrt(eta_t)(1 - sqrt(eta_t)) / (eps^2 Gamma2), (1 - sqrt(eta_t)) / (eps^2 Gamma2))`.
pub fn quadratic_phase_interval(c: &TheoryConstants, t: u64) -> PhaseInterval {
    let eta = c.eta(t);
    if !(eta < 1.0) {
        return PhaseInterval::Empty;
    }
    if c.gamma2 == 0.0 {
        return PhaseInterval::Unbounded;
    }
    let s = eta.sqrt();
    let scale = c.epsilon * c.epsilon * c.gamma2;
    PhaseInterval::Bounded { lower: s * (1.0 - s) / scale, upper: (1.0 - s) / scale }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub t: usize,
    /// `||D_t^{-1/2} g_{t+1}||`.
    pub lhs: f64,
    /// `eta_t ||D_{t-1}^{-1/2} g_t||`.
    pub rhs_linear: f64,
    /// `eps^2 Gamma2 ||D_{t-1}^{-1/2} g_t||^2`.
    pub rhs_quadratic: f64,
    pub in_quadratic_interval: bool,
    pub violated: bool,
    #[serde(skip)]
    pub eta: f64,
    #[serde(skip)]
    pub prev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// False when `zeta` lies outside `(0, 1)` and the bound was not evaluated.
    pub evaluated: bool,
    pub rows: Vec<RateRow>,
}

impl RateReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violated).count()
    }

    /// CSV with columns `t,lhs,rhs_linear,rhs_quadratic,in_quadratic_interval,violated`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,lhs,rhs_linear,rhs_quadratic,in_quadratic_interval,violated\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.t, r.lhs, r.rhs_linear, r.rhs_quadratic, r.in_quadratic_interval as u8, r.violated as u8
            );
        }
        out
    }
}

/// Check the one-step weighted-gradient bound
///
/// ```text
/// ||D_t^{-1/2} g_{t+1}|| <= eta_t ||D_{t-1}^{-1/2} g_t|| + eps^2 Gamma2 ||D_{t-1}^{-1/2} g_t||^2
/// ```
///
/// for every `t >= 1` in the trace (at `t = 0` there is no `D_{-1}`).
pub fn check_rate_bound(trace: &Trace, c: &TheoryConstants) -> RateReport {
    if !c.zeta_valid() {
        return RateReport { evaluated: false, rows: Vec::new() };
    }
    let rows = trace
        .records
        .windows(2)
        .skip(1)
        .map(|w| {
            let t = w[0].t;
            let prev = w[0].weighted_grad_norm;
            let lhs = w[1].weighted_grad_norm;
            let eta = c.eta(t as u64);
            let rhs_linear = eta * prev;
            let rhs_quadratic = c.epsilon * c.epsilon * c.gamma2 * prev * prev;
            RateRow {
                t,
                lhs,
                rhs_linear,
                rhs_quadratic,
                in_quadratic_interval: quadratic_phase_interval(c, t as u64).contains(prev),
                violated: lhs > rhs_linear + rhs_quadratic + BOUND_SLACK,
                eta,
                prev,
            }
        })
        .collect();
    RateReport { evaluated: true, rows }
}

/// Rows inside the quadratic interval that break
/// `||D_t^{-1/2} g_{t+1}|| <= eps^2 Gamma2 / (1 - sqrt(eta_t)) ||D_{t-1}^{-1/2} g_t||^2`.
pub fn quadratic_phase_violations(report: &RateReport, c: &TheoryConstants) -> Vec<usize> {
    report
        .rows
        .iter()
        .filter(|r| r.in_quadratic_interval)
        .filter(|r| {
            let bound = c.epsilon * c.epsilon * c.gamma2 / (1.0 - r.eta.sqrt()) * r.prev * r.prev;
            r.lhs > bound + BOUND_SLACK
        })
        .map(|r| r.t)
        .collect()
}

/// Worst observed ratio of consecutive weighted gradient norms, and the
/// iterations where `||D^{-1/2} g_{t+1}|| > (factor + rel_slack) ||D^{-1/2} g_t||`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub worst_ratio: f64,
    pub violations: Vec<usize>,
}

pub fn check_contraction(trace: &Trace, factor: f64, rel_slack: f64) -> ContractionReport {
    let mut worst: f64 = 0.0;
    let mut violations = Vec::new();
    for w in trace.records.windows(2) {
        let (prev, next) = (w[0].weighted_grad_norm, w[1].weighted_grad_norm);
        if prev > 0.0 {
            worst = worst.max(next / prev);
        }
        if next > (factor + rel_slack) * prev {
            violations.push(w[0].t);
        }
    }
    ContractionReport { worst_ratio: worst, violations }
}

/// Iterations where `F(y_t) - F* > (1 - zeta)^t (F(y_0) - F*) + slack`.
pub fn check_linear_rate(trace: &Trace, zeta: f64, f_star: f64) -> Vec<usize> {
    let Some(first) = trace.records.first() else { return Vec::new() };
    let gap0 = first.f_value - f_star;
    trace
        .records
        .iter()
        .filter(|r| r.f_value - f_star > (1.0 - zeta).powi(r.t as i32) * gap0 + BOUND_SLACK)
        .map(|r| r.t)
        .collect()
}

/// First-order Taylor remainder of the gradient between two iterates against
/// its Hessian-Lipschitz bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorRemainder {
    /// `||g_{t+1} - g_t - H_t (y_{t+1} - y_t)||`.
    pub remainder: f64,
    /// `(alpha L / 2) ||y_{t+1} - y_t||^2`.
    pub bound: f64,
    pub holds: bool,
}

pub fn check_taylor_remainder<O: LocalObjective>(
    prob: &PenalizedProblem<O>,
    y_t: &StackedIterate,
    y_next: &StackedIterate,
) -> Result<TaylorRemainder> {
    let step = y_next.sub(y_t);
    let hessians = prob.local_hessians(y_t)?;
    let mut r = prob.gradient(y_next)?.sub(&prob.gradient(y_t)?);
    r.axpy(-1.0, &prob.apply_hessian(&hessians, &step));
    let remainder = r.norm();
    let bound = 0.5 * prob.alpha() * prob.curvature().lipschitz * step.norm_squared();
    Ok(TaylorRemainder { remainder, bound, holds: remainder <= bound + BOUND_SLACK })
}
