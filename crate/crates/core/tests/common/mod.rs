#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use netnewton::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Path graph on `n` nodes with Metropolis weights; irregular degrees and
/// unequal diagonal weights.
pub fn metropolis_path(n: usize) -> (Topology, WeightMatrix) {
    let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let topo = Topology::from_edges(n, &edges).unwrap();
    let mut w = DMatrix::zeros(n, n);
    for &(i, j) in &edges {
        let v = 1.0 / (1.0 + topo.degree(i).max(topo.degree(j)) as f64);
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..n {
        w[(i, i)] = 1.0 - w.row(i).sum();
    }
    (topo, WeightMatrix::from_dense(w).unwrap())
}

/// Network number `variant` among a few small test networks on five nodes.
pub fn small_network(variant: usize) -> (Topology, WeightMatrix) {
    match variant % 3 {
        0 => {
            let t = Topology::d_regular_cycle(5, 2).unwrap();
            let w = WeightMatrix::cycle(&t, 2).unwrap();
            (t, w)
        }
        1 => {
            let t = Topology::d_regular_cycle(5, 4).unwrap();
            let w = WeightMatrix::cycle(&t, 4).unwrap();
            (t, w)
        }
        _ => metropolis_path(5),
    }
}

pub fn small_quadratic(variant: usize, seed: u64, alpha: f64) -> PenalizedProblem<DiagonalQuadratic> {
    let (t, w) = small_network(variant);
    let objectives = generate_quadratic(t.n(), &QuadraticEnsembleConfig { p: 2, xi: 2, seed }).unwrap();
    PenalizedProblem::new(t, w, objectives, alpha).unwrap()
}

pub fn small_logistic(variant: usize, seed: u64, alpha: f64) -> PenalizedProblem<LogisticLoss> {
    let (t, w) = small_network(variant);
    let cfg = LogisticDataConfig {
        p: 2,
        samples_per_node: 6,
        mu: 1.0,
        sigma_plus: 1.0,
        sigma_minus: 1.0,
        lambda: 1e-1,
        seed,
    };
    let objectives = generate_logistic(t.n(), &cfg).unwrap();
    PenalizedProblem::new(t, w, objectives, alpha).unwrap()
}

pub fn random_point(rng: &mut impl Rng, n: usize, p: usize) -> StackedIterate {
    StackedIterate::from_blocks((0..n).map(|_| DVector::from_fn(p, |_, _| rng.gen_range(-2.0..2.0))).collect())
        .unwrap()
}

pub fn flat(y: &StackedIterate) -> DVector<f64> {
    y.to_flat()
}

/// Dense `D` and `B` assembled from the blockwise splitting.
pub fn dense_split(split: &SplitBlocks, p: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = split.n();
    let mut d = DMatrix::zeros(n * p, n * p);
    let mut b = DMatrix::zeros(n * p, n * p);
    let eye = DMatrix::<f64>::identity(p, p);
    for i in 0..n {
        d.view_mut((i * p, i * p), (p, p)).copy_from(split.d_block(i));
        b.view_mut((i * p, i * p), (p, p)).copy_from(&(&eye * split.b_diag(i)));
        for &(j, w) in split.b_off(i) {
            b.view_mut((i * p, j * p), (p, p)).copy_from(&(&eye * w));
        }
    }
    (d, b)
}

/// Theory constants of a problem at truncation order `order`, unit step, no
/// Hessian-Lipschitz terms needed.
pub fn constants<O: LocalObjective>(prob: &PenalizedProblem<O>, order: usize) -> TheoryConstants {
    let c = prob.curvature();
    compute_constants(&TheoryInputs {
        delta: prob.weights().delta(),
        upper_delta: prob.weights().upper_delta(),
        alpha: prob.alpha(),
        m: c.m,
        big_m: c.big_m,
        lipschitz: c.lipschitz,
        epsilon: 1.0,
        order,
        gap: 0.0,
    })
    .unwrap()
}
