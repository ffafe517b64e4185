//! Error and communication-cost accounting.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::penalty::StackedIterate;
use crate::solvers::Method;
use crate::topology::Topology;

/// Average normalized squared distance of the local iterates to `x_star`:
/// `(1/n) sum_i |x_i - x*|^2 / |x*|^2`.
pub fn relative_error(y: &StackedIterate, x_star: &DVector<f64>) -> Result<f64> {
    if y.p() != x_star.len() {
        return Err(Error::Dimension { expected: y.p(), got: x_star.len() });
    }
    let denom = x_star.norm_squared();
    if denom == 0.0 {
        return Err(Error::Parameter("relative error is undefined for x* = 0".into()));
    }
    let sum: f64 = y.blocks().iter().map(|x| (x - x_star).norm_squared()).sum();
    Ok(sum / (y.n() as f64 * denom))
}

/// Directed vector sends after `t` iterations: DGD sends each iterate to every
/// neighbor once per iteration, NN-K additionally forwards `K` intermediate
/// directions. The per-link exchange count is this value divided by 2.
pub fn comm_cost(method: Method, t: u64, topo: &Topology) -> u64 {
    method.exchanges_per_iteration() * t * topo.total_degree() as u64
}

/// Running count of directed vector sends, one entry per iteration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommLedger {
    per_iteration: Vec<u64>,
    total: u64,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, sends: u64) {
        self.per_iteration.push(sends);
        self.total += sends;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn per_iteration(&self) -> &[u64] {
        &self.per_iteration
    }

    pub fn iterations(&self) -> usize {
        self.per_iteration.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consensus(n: usize, x: &DVector<f64>) -> StackedIterate {
        StackedIterate::from_blocks(vec![x.clone(); n]).unwrap()
    }

    #[test]
    fn relative_error_cases() {
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(relative_error(&consensus(4, &x), &x).unwrap(), 0.0);
        assert_eq!(relative_error(&StackedIterate::zeros(4, 3), &x).unwrap(), 1.0);
        assert!((relative_error(&consensus(4, &(&x * 2.0)), &x).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn relative_error_rejects_zero_reference() {
        let x = DVector::zeros(2);
        assert!(relative_error(&StackedIterate::zeros(3, 2), &x).is_err());
    }

    #[test]
    fn comm_cost_examples() {
        let t = Topology::d_regular_cycle(100, 4).unwrap();
        assert_eq!(comm_cost(Method::Dgd, 10, &t), 4000);
        assert_eq!(comm_cost(Method::NetworkNewton(1), 10, &t), 8000);
        assert_eq!(comm_cost(Method::NetworkNewton(2), 0, &t), 0);
    }

    #[test]
    fn ledger_accumulates() {
        let mut l = CommLedger::new();
        l.record(3);
        l.record(5);
        assert_eq!(l.total(), 8);
        assert_eq!(l.per_iteration(), &[3, 5]);
    }
}
