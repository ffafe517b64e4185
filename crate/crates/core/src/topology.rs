//! Network graphs and consensus weight matrices.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Undirected network given by per-node neighbor lists.
///
/// Neighbor lists are sorted, symmetric and free of self-loops. Graphs built
/// through [`Topology::new`] are also connected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Build a connected topology from neighbor lists.
    pub fn new(neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let topo = Self::new_unconnected(neighbors)?;
        if !topo.is_connected() {
            return Err(Error::Topology("graph is not connected".into()));
        }
        Ok(topo)
    }

    /// Like [`Topology::new`] but accepts graphs with several components.
    ///
    /// Such graphs violate the consensus requirement; they exist so that
    /// weight validation can be exercised on them.
    pub fn new_unconnected(mut neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbors.len();
        if n < 2 {
            return Err(Error::Topology(format!("need at least 2 nodes, got {n}")));
        }
        for (i, list) in neighbors.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Topology(format!("node {i} lists a neighbor twice")));
            }
            if let Some(&j) = list.iter().find(|&&j| j >= n) {
                return Err(Error::Topology(format!("node {i} has out-of-range neighbor {j}")));
            }
            if list.binary_search(&i).is_ok() {
                return Err(Error::Topology(format!("node {i} has a self-loop")));
            }
        }
        for i in 0..n {
            for &j in &neighbors[i] {
                if neighbors[j].binary_search(&i).is_err() {
                    return Err(Error::Topology(format!("edge {i}->{j} has no reverse edge")));
                }
            }
        }
        Ok(Self { neighbors })
    }

    /// Undirected graph from an edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Topology(format!("edge ({a}, {b}) out of range for n = {n}")));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        Self::new(neighbors)
    }

    /// `d`-regular cycle: node `i` is joined to the `d/2` closest nodes on
    /// each side around a ring of `n` nodes.
    pub fn d_regular_cycle(n: usize, d: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Topology(format!("cycle needs n >= 3, got {n}")));
        }
        if d < 2 || d % 2 != 0 {
            return Err(Error::Topology(format!("degree must be even and >= 2, got {d}")));
        }
        if d >= n {
            return Err(Error::Topology(format!("degree {d} must be < n = {n}")));
        }
        let half = d / 2;
        let neighbors = (0..n)
            .map(|i| {
                (1..=half)
                    .flat_map(|s| [(i + s) % n, (i + n - s) % n])
                    .collect::<Vec<_>>()
            })
            .collect();
        Self::new(neighbors)
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// `sum_i |N_i|`, the number of directed vector sends in one exchange round.
    pub fn total_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// Common degree if every node has the same number of neighbors.
    pub fn regular_degree(&self) -> Option<usize> {
        let d = self.degree(0);
        self.neighbors.iter().all(|l| l.len() == d).then_some(d)
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    /// Number of connected components, by breadth-first traversal.
    pub fn component_count(&self) -> usize {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &v in &self.neighbors[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        components
    }
}

/// Symmetric, row-stochastic consensus weights supported on the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
    delta: f64,
    upper_delta: f64,
}

impl WeightMatrix {
    /// Weights used for `d`-regular cycles: `w_ii = 1/2 + 1/(2(d+1))` and
    /// `w_ij = 1/(2(d+1))` on every edge.
    pub fn cycle(topo: &Topology, d: usize) -> Result<Self> {
        match topo.regular_degree() {
            Some(deg) if deg == d => {}
            Some(deg) => {
                return Err(Error::Weights(format!("topology is {deg}-regular, not {d}-regular")))
            }
            None => return Err(Error::Weights("topology is not regular".into())),
        }
        let n = topo.n();
        let off = 1.0 / (2.0 * (d as f64 + 1.0));
        let diag = 0.5 + off;
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            w[(i, i)] = diag;
            for &j in topo.neighbors(i) {
                w[(i, j)] = off;
            }
        }
        Ok(Self::from_dense_unchecked(w))
    }

    /// Wrap an arbitrary square matrix. Nothing beyond the shape is checked;
    /// use [`WeightMatrix::validate`] for the consensus conditions.
    pub fn from_dense(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::Weights(format!("matrix is {}x{}", w.nrows(), w.ncols())));
        }
        Ok(Self::from_dense_unchecked(w))
    }

    fn from_dense_unchecked(w: DMatrix<f64>) -> Self {
        let diag = w.diagonal();
        let delta = diag.min();
        let upper_delta = diag.max();
        Self { w, delta, upper_delta }
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.w[(i, i)]
    }

    /// Smallest diagonal weight.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Largest diagonal weight.
    pub fn upper_delta(&self) -> f64 {
        self.upper_delta
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Check every consensus condition and report measured residuals.
    pub fn validate(&self, topo: &Topology) -> ValidationReport {
        let n = self.n();
        if topo.n() != n {
            let fail = Check { passed: false, residual: f64::INFINITY };
            return ValidationReport {
                symmetry: fail,
                row_stochastic: fail,
                diagonal_bounds: fail,
                sparsity: fail,
                null_space: fail,
                unit_eigenvalue_multiplicity: 0,
                second_eigenvalue_modulus: f64::NAN,
            };
        }

        let asymmetry = (&self.w - self.w.transpose()).abs().max();
        let row_dev = self
            .w
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max);

        // Largest violation of 0 <= w_ii < 1 and of nonnegative off-diagonals.
        let mut bound_violation: f64 = 0.0;
        for i in 0..n {
            let wii = self.w[(i, i)];
            bound_violation = bound_violation.max(-wii).max(wii - (1.0 - 1e-12));
        }

        let mut off_support: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j && topo.neighbors(i).binary_search(&j).is_err() {
                    off_support = off_support.max(self.w[(i, j)].abs());
                }
            }
        }

        let sym = (&self.w + self.w.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym).eigenvalues;
        let multiplicity = eig.iter().filter(|&&l| (l - 1.0).abs() < EIGEN_TOL).count();
        let mut moduli: Vec<f64> = eig.iter().map(|l| l.abs()).collect();
        moduli.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let slem = moduli.get(1).copied().unwrap_or(0.0);

        ValidationReport {
            symmetry: Check::le(asymmetry, SYMMETRY_TOL),
            row_stochastic: Check::le(row_dev, ROW_SUM_TOL),
            diagonal_bounds: Check::le(bound_violation, 0.0),
            sparsity: Check::le(off_support, 0.0),
            null_space: Check {
                passed: multiplicity == 1 && slem < 1.0 - EIGEN_TOL,
                residual: slem,
            },
            unit_eigenvalue_multiplicity: multiplicity,
            second_eigenvalue_modulus: slem,
        }
    }
}

const SYMMETRY_TOL: f64 = 1e-12;
const ROW_SUM_TOL: f64 = 1e-12;
const EIGEN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub passed: bool,
    pub residual: f64,
}

impl Check {
    fn le(residual: f64, tol: f64) -> Self {
        Self { passed: residual <= tol, residual }
    }
}

/// Outcome of [`WeightMatrix::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// Max `|w_ij - w_ji|`.
    pub symmetry: Check,
    /// Max `|sum_j w_ij - 1|`.
    pub row_stochastic: Check,
    /// Worst violation of `0 <= w_ii < 1`.
    pub diagonal_bounds: Check,
    /// Largest weight placed outside the graph's edges.
    pub sparsity: Check,
    /// `null(I - W) = span(1)`: eigenvalue 1 is simple and every other
    /// eigenvalue has modulus below 1. The residual is that second modulus.
    pub null_space: Check,
    pub unit_eigenvalue_multiplicity: usize,
    pub second_eigenvalue_modulus: f64,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.symmetry.passed
            && self.row_stochastic.passed
            && self.diagonal_bounds.passed
            && self.sparsity.passed
            && self.null_space.passed
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |c: &Check| if c.passed { "ok" } else { "FAIL" };
        writeln!(f, "symmetry        {:4}  max |w_ij - w_ji| = {:.3e}", mark(&self.symmetry), self.symmetry.residual)?;
        writeln!(f, "row-stochastic  {:4}  max |row sum - 1| = {:.3e}", mark(&self.row_stochastic), self.row_stochastic.residual)?;
        writeln!(f, "diagonal bounds {:4}  violation = {:.3e}", mark(&self.diagonal_bounds), self.diagonal_bounds.residual)?;
        writeln!(f, "sparsity        {:4}  off-graph weight = {:.3e}", mark(&self.sparsity), self.sparsity.residual)?;
        write!(
            f,
            "null space      {:4}  mult(1) = {}, second modulus = {:.6}",
            mark(&self.null_space),
            self.unit_eigenvalue_multiplicity,
            self.second_eigenvalue_modulus
        )
    }
}
