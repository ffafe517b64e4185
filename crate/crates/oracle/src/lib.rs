//! Dense reference constructions for small instances.
//!
//! Everything here materializes `np x np` matrices on purpose: it is the
//! independent side of the blockwise-versus-dense checks and must not share
//! code paths with the production crate. Inputs are plain matrices (the
//! consensus weights `W` and the per-node local Hessians), never types from
//! `netnewton`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `Z = W ⊗ I_p`.
pub fn extended_weights(w: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    w.kronecker(&DMatrix::identity(p, p))
}

/// Block-diagonal matrix from a list of square blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let dim: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(dim, dim);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}

/// Concatenate per-node vectors into one stacked vector.
pub fn stack(blocks: &[DVector<f64>]) -> DVector<f64> {
    let data: Vec<f64> = blocks.iter().flat_map(|b| b.iter().copied()).collect();
    DVector::from_vec(data)
}

/// Split a stacked vector into `n` blocks of size `p`.
pub fn unstack(y: &DVector<f64>, p: usize) -> Vec<DVector<f64>> {
    y.as_slice()
        .chunks(p)
        .map(|c| DVector::from_column_slice(c))
        .collect()
}

/// `I - Z`.
pub fn consensus_laplacian(w: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let z = extended_weights(w, p);
    DMatrix::identity(z.nrows(), z.ncols()) - z
}

/// Penalized Hessian `H = (I - Z) + alpha G`.
pub fn hessian(w: &DMatrix<f64>, local_hessians: &[DMatrix<f64>], alpha: f64) -> DMatrix<f64> {
    let p = local_hessians[0].nrows();
    consensus_laplacian(w, p) + block_diag(local_hessians) * alpha
}

/// `D = alpha G + 2 (I - Z_d)`.
pub fn split_diagonal(w: &DMatrix<f64>, local_hessians: &[DMatrix<f64>], alpha: f64) -> DMatrix<f64> {
    let p = local_hessians[0].nrows();
    let blocks: Vec<DMatrix<f64>> = local_hessians
        .iter()
        .enumerate()
        .map(|(i, h)| h * alpha + DMatrix::identity(p, p) * (2.0 * (1.0 - w[(i, i)])))
        .collect();
    block_diag(&blocks)
}

/// `B = I - 2 Z_d + Z`.
pub fn split_coupling(w: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let n = w.nrows();
    let z = extended_weights(w, p);
    let mut zd = DMatrix::zeros(n * p, n * p);
    for k in 0..n * p {
        zd[(k, k)] = z[(k, k)];
    }
    DMatrix::identity(n * p, n * p) - zd * 2.0 + z
}

/// Symmetric matrix function via eigendecomposition.
pub fn sym_apply(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let mapped = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    &eig.eigenvectors * mapped * eig.eigenvectors.transpose()
}

pub fn inv_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(a, |x| 1.0 / x.sqrt())
}

/// `D^{-1/2} B D^{-1/2}`.
pub fn normalized_coupling(d: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let s = inv_sqrt(d);
    &s * b * &s
}

/// Truncated series `D^{-1/2} (sum_{k=0}^{K} X^k) D^{-1/2}` with `X = D^{-1/2} B D^{-1/2}`.
pub fn truncated_inverse(d: &DMatrix<f64>, b: &DMatrix<f64>, order: usize) -> DMatrix<f64> {
    let s = inv_sqrt(d);
    let x = &s * b * &s;
    let dim = d.nrows();
    let mut power = DMatrix::identity(dim, dim);
    let mut sum = power.clone();
    for _ in 0..order {
        power = &power * &x;
        sum += &power;
    }
    &s * sum * &s
}

/// Sorted eigenvalues of a symmetric matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Spectral norm of a general square matrix.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().svd(false, false).singular_values.max()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// Number of eigenvalues within `tol` of 1.
pub fn unit_eigenvalue_multiplicity(w: &DMatrix<f64>, tol: f64) -> usize {
    eigenvalues(w).iter().filter(|&&l| (l - 1.0).abs() < tol).count()
}

/// Exact Newton direction `-H^{-1} g`.
pub fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    -h.clone().cholesky().expect("H must be positive definite").solve(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_inverse_converges_to_inverse() {
        let w = DMatrix::from_row_slice(3, 3, &[0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.25, 0.25, 0.5]);
        let hs = vec![DMatrix::identity(1, 1); 3];
        let alpha = 1.0;
        let h = hessian(&w, &hs, alpha);
        let d = split_diagonal(&w, &hs, alpha);
        let b = split_coupling(&w, 1);
        assert!(max_abs_diff(&h, &(&d - &b)) < 1e-14);
        let approx = truncated_inverse(&d, &b, 200);
        let exact = h.try_inverse().unwrap();
        assert!(max_abs_diff(&approx, &exact) < 1e-12);
    }

    #[test]
    fn stack_unstack() {
        let blocks = vec![DVector::from_vec(vec![1.0, 2.0]), DVector::from_vec(vec![3.0, 4.0])];
        assert_eq!(unstack(&stack(&blocks), 2), blocks);
    }
}
