//! The penalized problem `F(y) = 1/2 y'(I - Z)y + alpha sum_i f_i(x_i)`, its
//! gradient, the Hessian splitting `H = D - B`, and the NN-K direction.
//!
//! Every operator here works block by block on the graph: node `i` only reads
//! its own block and the blocks of its neighbors.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::objectives::{Curvature, LocalObjective};
use crate::topology::{Topology, WeightMatrix};

/// Stacked iterate `y = [x_1; ...; x_n]`, block `i` owned by agent `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedIterate {
    blocks: Vec<DVector<f64>>,
}

impl StackedIterate {
    pub fn zeros(n: usize, p: usize) -> Self {
        Self { blocks: vec![DVector::zeros(p); n] }
    }

    pub fn from_blocks(blocks: Vec<DVector<f64>>) -> Result<Self> {
        let p = blocks
            .first()
            .ok_or_else(|| Error::Parameter("stacked iterate needs at least one block".into()))?
            .len();
        if let Some(b) = blocks.iter().find(|b| b.len() != p) {
            return Err(Error::Dimension { expected: p, got: b.len() });
        }
        Ok(Self { blocks })
    }

    /// Every agent holds the same vector.
    pub fn consensus(n: usize, x: &DVector<f64>) -> Self {
        Self { blocks: vec![x.clone(); n] }
    }

    /// Split a flat vector of length `n * p` into blocks.
    pub fn from_flat(v: &[f64], p: usize) -> Result<Self> {
        if p == 0 || v.len() % p != 0 || v.is_empty() {
            return Err(Error::Dimension { expected: p, got: v.len() });
        }
        Ok(Self { blocks: v.chunks(p).map(DVector::from_column_slice).collect() })
    }

    pub fn to_flat(&self) -> DVector<f64> {
        DVector::from_iterator(self.n() * self.p(), self.blocks.iter().flat_map(|b| b.iter().copied()))
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn p(&self) -> usize {
        self.blocks[0].len()
    }

    pub fn block(&self, i: usize) -> &DVector<f64> {
        &self.blocks[i]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut DVector<f64> {
        &mut self.blocks[i]
    }

    pub fn blocks(&self) -> &[DVector<f64>] {
        &self.blocks
    }

    pub fn norm_squared(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.dot(b)).sum()
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (s, b) in self.blocks.iter_mut().zip(&x.blocks) {
            s.axpy(a, b, 1.0);
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { blocks: self.blocks.iter().map(|b| b * a).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect() }
    }

    /// Largest per-block Euclidean norm.
    pub fn max_block_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm()).fold(0.0, f64::max)
    }
}

/// Penalized reformulation of the consensus problem for a fixed `alpha`.
#[derive(Debug)]
pub struct PenalizedProblem<O> {
    topo: Arc<Topology>,
    weights: Arc<WeightMatrix>,
    objectives: Arc<[O]>,
    alpha: f64,
    p: usize,
}

impl<O> Clone for PenalizedProblem<O> {
    fn clone(&self) -> Self {
        Self {
            topo: Arc::clone(&self.topo),
            weights: Arc::clone(&self.weights),
            objectives: Arc::clone(&self.objectives),
            alpha: self.alpha,
            p: self.p,
        }
    }
}

impl<O: LocalObjective> PenalizedProblem<O> {
    pub fn new(topo: Topology, weights: WeightMatrix, objectives: Vec<O>, alpha: f64) -> Result<Self> {
        let n = topo.n();
        if weights.n() != n {
            return Err(Error::Dimension { expected: n, got: weights.n() });
        }
        if objectives.len() != n {
            return Err(Error::Dimension { expected: n, got: objectives.len() });
        }
        let p = objectives[0].dim();
        if let Some(o) = objectives.iter().find(|o| o.dim() != p) {
            return Err(Error::Dimension { expected: p, got: o.dim() });
        }
        check_alpha(alpha)?;
        Ok(Self {
            topo: Arc::new(topo),
            weights: Arc::new(weights),
            objectives: objectives.into(),
            alpha,
            p,
        })
    }

    /// Same network and objectives with a different `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha, ..self.clone() })
    }

    pub fn n(&self) -> usize {
        self.topo.n()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn objectives(&self) -> &[O] {
        &self.objectives
    }

    /// Worst-case curvature constants over all agents.
    pub fn curvature(&self) -> Curvature {
        let cs: Vec<Curvature> = self.objectives.iter().map(|o| o.curvature()).collect();
        Curvature::combine(&cs).expect("problem has at least two agents")
    }

    pub fn constant_hessian(&self) -> bool {
        self.objectives.iter().all(|o| o.constant_hessian())
    }

    fn check_dims(&self, y: &StackedIterate) -> Result<()> {
        if y.n() != self.n() {
            return Err(Error::Dimension { expected: self.n(), got: y.n() });
        }
        if y.p() != self.p {
            return Err(Error::Dimension { expected: self.p, got: y.p() });
        }
        Ok(())
    }

    /// `((I - Z) y)_i = (1 - w_ii) x_i - sum_{j in N_i} w_ij x_j`.
    fn laplacian_block(&self, y: &StackedIterate, i: usize) -> DVector<f64> {
        let mut out = y.block(i) * (1.0 - self.weights.diag(i));
        for &j in self.topo.neighbors(i) {
            out.axpy(-self.weights.get(i, j), y.block(j), 1.0);
        }
        out
    }

    /// `1/2 y'(I - Z)y`.
    pub fn consensus_penalty(&self, y: &StackedIterate) -> Result<f64> {
        self.check_dims(y)?;
        Ok(0.5 * (0..self.n()).map(|i| y.block(i).dot(&self.laplacian_block(y, i))).sum::<f64>())
    }

    /// `F(y)`.
    pub fn value(&self, y: &StackedIterate) -> Result<f64> {
        let penalty = self.consensus_penalty(y)?;
        let local: f64 = self
            .objectives
            .iter()
            .zip(y.blocks())
            .map(|(f, x)| f.value(x))
            .sum();
        Ok(penalty + self.alpha * local)
    }

    /// `g_i = (1 - w_ii) x_i - sum_{j in N_i} w_ij x_j + alpha grad f_i(x_i)`.
    pub fn local_gradient(&self, y: &StackedIterate, i: usize) -> DVector<f64> {
        let mut g = self.laplacian_block(y, i);
        g.axpy(self.alpha, &self.objectives[i].gradient(y.block(i)), 1.0);
        g
    }

    /// Full gradient `(I - Z) y + alpha h(y)`.
    pub fn gradient(&self, y: &StackedIterate) -> Result<StackedIterate> {
        Ok(self.exchange_gradient(y)?.0)
    }

    /// Gradient together with the number of directed sends of `x_j` it took.
    pub fn exchange_gradient(&self, y: &StackedIterate) -> Result<(StackedIterate, u64)> {
        self.check_dims(y)?;
        let mut sends = 0u64;
        let blocks = (0..self.n())
            .map(|i| {
                sends += self.topo.degree(i) as u64;
                self.local_gradient(y, i)
            })
            .collect();
        Ok((StackedIterate { blocks }, sends))
    }

    /// Per-agent Hessians `hess f_i(x_i)`.
    pub fn local_hessians(&self, y: &StackedIterate) -> Result<Vec<DMatrix<f64>>> {
        self.check_dims(y)?;
        Ok(self.objectives.iter().zip(y.blocks()).map(|(f, x)| f.hessian(x)).collect())
    }

    /// `H v = (I - Z) v + alpha G v` with `G` the block-diagonal of `hessians`.
    pub fn apply_hessian(&self, hessians: &[DMatrix<f64>], v: &StackedIterate) -> StackedIterate {
        let blocks = (0..self.n())
            .map(|i| {
                let mut out = self.laplacian_block(v, i);
                out.gemv(self.alpha, &hessians[i], v.block(i), 1.0);
                out
            })
            .collect();
        StackedIterate { blocks }
    }

    /// Splitting `H = D - B` at `y`.
    pub fn split(&self, y: &StackedIterate) -> Result<SplitBlocks> {
        let hessians = self.local_hessians(y)?;
        self.split_from_hessians(hessians)
    }

    pub fn split_from_hessians(&self, hessians: Vec<DMatrix<f64>>) -> Result<SplitBlocks> {
        let n = self.n();
        let mut d_blocks = Vec::with_capacity(n);
        let mut factors = Vec::with_capacity(n);
        for (i, h) in hessians.into_iter().enumerate() {
            let shift = 2.0 * (1.0 - self.weights.diag(i));
            let mut d = h * self.alpha;
            for k in 0..self.p {
                d[(k, k)] += shift;
            }
            let chol = Cholesky::new(d.clone()).ok_or(Error::NotPositiveDefinite { node: i })?;
            d_blocks.push(d);
            factors.push(chol);
        }
        let b_diag = (0..n).map(|i| 1.0 - self.weights.diag(i)).collect();
        let b_off = (0..n)
            .map(|i| self.topo.neighbors(i).iter().map(|&j| (j, self.weights.get(i, j))).collect())
            .collect();
        Ok(SplitBlocks { d_blocks, factors, b_diag, b_off })
    }

    /// NN-K direction at `y`.
    pub fn nn_direction(&self, y: &StackedIterate, order: usize) -> Result<NnDirection> {
        let split = self.split(y)?;
        let g = self.gradient(y)?;
        Ok(split.direction(&g, order))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Parameter(format!("alpha must be positive and finite, got {alpha}")));
    }
    Ok(())
}

/// Blocks of `H = D - B`.
///
/// `D_ii = alpha hess f_i(x_i) + 2 (1 - w_ii) I` is kept with its Cholesky
/// factor; `B` depends on the weights only, with `B_ii = (1 - w_ii) I` and
/// `B_ij = w_ij I` for `j in N_i`.
#[derive(Debug, Clone)]
pub struct SplitBlocks {
    d_blocks: Vec<DMatrix<f64>>,
    factors: Vec<Cholesky<f64, Dyn>>,
    b_diag: Vec<f64>,
    b_off: Vec<Vec<(usize, f64)>>,
}

impl SplitBlocks {
    pub fn n(&self) -> usize {
        self.d_blocks.len()
    }

    pub fn d_block(&self, i: usize) -> &DMatrix<f64> {
        &self.d_blocks[i]
    }

    /// Scalar of `B_ii = (1 - w_ii) I`.
    pub fn b_diag(&self, i: usize) -> f64 {
        self.b_diag[i]
    }

    /// `(j, w_ij)` for each neighbor, i.e. the scalars of `B_ij`.
    pub fn b_off(&self, i: usize) -> &[(usize, f64)] {
        &self.b_off[i]
    }

    /// `D_ii^{-1} rhs`.
    pub fn solve(&self, i: usize, rhs: &DVector<f64>) -> DVector<f64> {
        self.factors[i].solve(rhs)
    }

    /// `||D^{-1/2} g|| = sqrt(sum_i g_i' D_ii^{-1} g_i)`.
    pub fn weighted_norm(&self, g: &StackedIterate) -> f64 {
        (0..self.n())
            .map(|i| g.block(i).dot(&self.solve(i, g.block(i))))
            .sum::<f64>()
            .sqrt()
    }

    /// NN-K direction by the K-hop recursion
    ///
    /// ```text
    /// d_i^(0)   = -D_ii^{-1} g_i
    /// d_i^(k+1) =  D_ii^{-1} [ B_ii d_i^(k) + sum_{j in N_i} B_ij d_j^(k) - g_i ]
    /// ```
    ///
    /// Each level reads only the previous level, so the per-node updates of a
    /// level are independent.
    pub fn direction(&self, g: &StackedIterate, order: usize) -> NnDirection {
        let n = self.n();
        let mut levels = Vec::with_capacity(order + 1);
        levels.push(StackedIterate { blocks: (0..n).map(|i| -self.solve(i, g.block(i))).collect() });
        let mut sends = 0u64;
        for _ in 0..order {
            let prev = levels.last().expect("level 0 exists");
            let blocks = (0..n)
                .map(|i| {
                    let mut rhs = prev.block(i) * self.b_diag[i] - g.block(i);
                    for &(j, wij) in &self.b_off[i] {
                        rhs.axpy(wij, prev.block(j), 1.0);
                        sends += 1;
                    }
                    self.solve(i, &rhs)
                })
                .collect();
            levels.push(StackedIterate { blocks });
        }
        NnDirection { levels, sends }
    }
}

/// Result of the NN-K recursion: every level `d^(0), ..., d^(K)` and the
/// number of directed sends of intermediate directions it required.
#[derive(Debug, Clone)]
pub struct NnDirection {
    pub levels: Vec<StackedIterate>,
    pub sends: u64,
}

impl NnDirection {
    pub fn order(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn direction(&self) -> &StackedIterate {
        self.levels.last().expect("at least one level")
    }

    pub fn into_direction(mut self) -> StackedIterate {
        self.levels.pop().expect("at least one level")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{generate_quadratic, DiagonalQuadratic, QuadraticEnsembleConfig};

    fn identity_problem(alpha: f64) -> PenalizedProblem<DiagonalQuadratic> {
        let topo = Topology::d_regular_cycle(6, 4).unwrap();
        let w = WeightMatrix::cycle(&topo, 4).unwrap();
        let fs = (0..6)
            .map(|i| DiagonalQuadratic::new(DVector::from_element(2, 1.0), DVector::from_element(2, i as f64)).unwrap())
            .collect();
        PenalizedProblem::new(topo, w, fs, alpha).unwrap()
    }

    #[test]
    fn split_blocks_for_cycle_weights() {
        let prob = identity_problem(0.01);
        let split = prob.split(&StackedIterate::zeros(6, 2)).unwrap();
        for i in 0..6 {
            assert!((split.d_block(i) - DMatrix::identity(2, 2) * 0.81).abs().max() < 1e-15);
            assert!((split.b_diag(i) - 0.4).abs() < 1e-15);
            assert!(split.b_off(i).iter().all(|&(_, w)| (w - 0.1).abs() < 1e-15));
            assert_eq!(split.b_off(i).len(), 4);
        }
    }

    #[test]
    fn consensus_has_no_penalty() {
        let prob = identity_problem(0.3);
        let y = StackedIterate::consensus(6, &DVector::from_vec(vec![1.5, -2.0]));
        assert!(prob.consensus_penalty(&y).unwrap().abs() < 1e-14);
    }

    #[test]
    fn two_node_penalty() {
        let w = 0.3;
        let topo = Topology::from_edges(2, &[(0, 1)]).unwrap();
        let wm = WeightMatrix::from_dense(DMatrix::from_row_slice(2, 2, &[1.0 - w, w, w, 1.0 - w])).unwrap();
        let fs = vec![DiagonalQuadratic::new(DVector::from_element(2, 1.0), DVector::zeros(2)).unwrap(); 2];
        let prob = PenalizedProblem::new(topo, wm, fs, 1.0).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let y = StackedIterate::from_blocks(vec![e1.clone(), -e1]).unwrap();
        assert!((prob.consensus_penalty(&y).unwrap() - 2.0 * w).abs() < 1e-15);
    }

    #[test]
    fn gradient_at_origin_is_linear_term() {
        let prob = identity_problem(0.25);
        let g = prob.gradient(&StackedIterate::zeros(6, 2)).unwrap();
        for i in 0..6 {
            assert!((g.block(i) - DVector::from_element(2, 0.25 * i as f64)).norm() < 1e-15);
        }
    }

    #[test]
    fn gradient_sums_to_zero_at_stationary_consensus() {
        let fs = generate_quadratic(8, &QuadraticEnsembleConfig { p: 4, xi: 2, seed: 1 }).unwrap();
        let x = crate::objectives::quadratic_optimum(&fs).unwrap();
        let topo = Topology::d_regular_cycle(8, 2).unwrap();
        let w = WeightMatrix::cycle(&topo, 2).unwrap();
        let prob = PenalizedProblem::new(topo, w, fs, 0.7).unwrap();
        let g = prob.gradient(&StackedIterate::consensus(8, &x)).unwrap();
        let total = g.blocks().iter().fold(DVector::zeros(4), |a, b| a + b);
        assert!(total.norm() < 1e-10);
    }

    #[test]
    fn zero_gradient_gives_zero_direction() {
        let prob = identity_problem(0.1);
        let split = prob.split(&StackedIterate::zeros(6, 2)).unwrap();
        let g = StackedIterate::zeros(6, 2);
        for k in [0, 1, 3] {
            assert_eq!(split.direction(&g, k).direction().norm(), 0.0);
        }
    }

    #[test]
    fn weighted_norm_scalar_case() {
        // D = c I whenever the local Hessians are identities and weights are uniform.
        let prob = identity_problem(0.5);
        let split = prob.split(&StackedIterate::zeros(6, 2)).unwrap();
        let c: f64 = 0.5 + 2.0 * 0.4;
        let g = StackedIterate::consensus(6, &DVector::from_vec(vec![3.0, -1.0]));
        assert!((split.weighted_norm(&g) - g.norm() / c.sqrt()).abs() < 1e-13);
        assert_eq!(split.weighted_norm(&StackedIterate::zeros(6, 2)), 0.0);
    }

    #[test]
    fn recursion_counts_sends() {
        let prob = identity_problem(0.1);
        let split = prob.split(&StackedIterate::zeros(6, 2)).unwrap();
        let g = prob.gradient(&StackedIterate::zeros(6, 2)).unwrap();
        let dir = split.direction(&g, 3);
        assert_eq!(dir.order(), 3);
        assert_eq!(dir.sends, 3 * 24);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let prob = identity_problem(0.1);
        assert!(prob.value(&StackedIterate::zeros(5, 2)).is_err());
        assert!(prob.value(&StackedIterate::zeros(6, 3)).is_err());
        assert!(prob.with_alpha(0.0).is_err());
        assert!(prob.with_alpha(-1.0).is_err());
    }
}
