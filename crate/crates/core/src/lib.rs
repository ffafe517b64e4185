//! Decentralized optimization over a multi-agent network with the network
//! Newton family of methods.
//!
//! The crate simulates `n` agents, each holding a private strongly convex
//! objective `f_i`, that minimize `sum_i f_i(x)` by exchanging vectors with
//! their graph neighbors. Consensus is relaxed with a quadratic penalty built
//! from a consensus weight matrix `W`:
//!
//! ```text
//! F(y) = 1/2 y'(I - Z)y + alpha * sum_i f_i(x_i),   Z = W ⊗ I_p
//! ```
//!
//! and `F` is minimized with
//!
//! * DGD, unit-step gradient descent on `F`;
//! * NN-K, which approximates the Newton step `-H^{-1} g` by the first `K + 1`
//!   terms of a Taylor expansion of the inverse of the split Hessian
//!   `H = D - B`, computable with `K + 1` neighbor exchanges per iteration;
//! * ANN-K, which reruns NN-K while shrinking `alpha` geometrically.
//!
//! Everything is evaluated blockwise: the `np x np` matrices `Z`, `H`, `D` and
//! `B` are never formed. [`theory`] computes the constants of the convergence
//! analysis and checks the rate bounds along recorded traces, and [`harness`]
//! drives the numerical experiments and writes CSV traces.
//!
//! ```
//! use netnewton::prelude::*;
//!
//! let topo = Topology::d_regular_cycle(10, 2).unwrap();
//! let w = WeightMatrix::cycle(&topo, 2).unwrap();
//! let objectives = generate_quadratic(10, &QuadraticEnsembleConfig { p: 2, xi: 1, seed: 7 }).unwrap();
//! let x_star = quadratic_optimum(&objectives).unwrap();
//! let prob = PenalizedProblem::new(topo, w, objectives, 1e-2).unwrap();
//!
//! let cfg = SolverConfig::new(Method::NetworkNewton(1)).with_max_iters(50);
//! let run = run_solver(&prob, &StackedIterate::zeros(10, 2), &cfg, Some(&x_star)).unwrap();
//! assert!(run.trace.last().rel_error.unwrap() < 1.0);
//! ```

pub mod adaptive;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod objectives;
pub mod penalty;
pub mod solvers;
pub mod theory;
pub mod topology;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::adaptive::{ann_run, AnnConfig, AnnOutcome, SignalState};
    pub use crate::error::{Error, Result};
    pub use crate::metrics::{comm_cost, relative_error, CommLedger};
    pub use crate::objectives::{
        check_derivatives, generate_logistic, generate_quadratic, quadratic_optimum, Curvature,
        DiagonalQuadratic, LocalObjective, LogisticDataConfig, LogisticLoss,
        QuadraticEnsembleConfig,
    };
    pub use crate::penalty::{NnDirection, PenalizedProblem, SplitBlocks, StackedIterate};
    pub use crate::solvers::{
        dgd_step, nn_step, reference_solve, run_solver, stepsize_rule, IterationRecord, Method,
        SolverConfig, SolverOutcome, StopReason, Trace,
    };
    pub use crate::theory::{
        check_rate_bound, check_taylor_remainder, compute_constants, quadratic_phase_interval,
        PhaseInterval, TheoryConstants, TheoryInputs,
    };
    pub use crate::topology::{Topology, ValidationReport, WeightMatrix};
}
