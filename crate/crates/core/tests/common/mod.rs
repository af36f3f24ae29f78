//! Independent reference computations shared by the integration tests.
//! Nothing here calls the crate's own matricization or SVD code.

#![allow(dead_code)]

use nalgebra::DMatrix;
use tblockgs::Tensor3;

/// Block-circulant matrix assembled entry by entry: block `(r, c)` is the
/// frontal slice `(r - c) mod p`.
pub fn naive_bcirc(t: &Tensor3) -> DMatrix<f64> {
    let (m, n, p) = t.dims();
    DMatrix::from_fn(m * p, n * p, |row, col| {
        let (r, i) = (row / m, row % m);
        let (c, j) = (col / n, col % n);
        t.get(i, j, (r + p - c) % p)
    })
}

/// Frontal slices stacked vertically, entry by entry.
pub fn naive_unfold(t: &Tensor3) -> DMatrix<f64> {
    let (m, n, p) = t.dims();
    DMatrix::from_fn(m * p, n, |row, j| t.get(row % m, j, row / m))
}

/// Singular values (descending, `min(rows, cols)` of them) and left
/// singular vectors for the nonzero ones, by one-sided Jacobi rotations on
/// the columns.
pub struct JacobiSvd {
    pub values: Vec<f64>,
    /// Orthonormal basis of the column space, one column per singular value
    /// above `1e-10 * sigma_max`.
    pub range: DMatrix<f64>,
}

pub fn jacobi_svd(a: &DMatrix<f64>) -> JacobiSvd {
    let mut w = a.clone();
    let ncols = w.ncols();
    for _sweep in 0..100 {
        let mut off = 0.0_f64;
        for i in 0..ncols {
            for j in (i + 1)..ncols {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt().max(f64::MIN_POSITIVE));
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..w.nrows() {
                    let (x, y) = (w[(r, i)], w[(r, j)]);
                    w[(r, i)] = c * x - s * y;
                    w[(r, j)] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut cols: Vec<(f64, usize)> = (0..ncols).map(|j| (w.column(j).norm(), j)).collect();
    cols.sort_by(|a, b| b.0.total_cmp(&a.0));
    let k = a.nrows().min(a.ncols());
    let values: Vec<f64> = cols.iter().take(k).map(|c| c.0).collect();
    let smax = values.first().copied().unwrap_or(0.0);
    let kept: Vec<usize> = cols
        .iter()
        .take(k)
        .filter(|c| c.0 > 1e-10 * smax && c.0 > 0.0)
        .map(|c| c.1)
        .collect();
    let mut range = DMatrix::zeros(a.nrows(), kept.len());
    for (dst, &j) in kept.iter().enumerate() {
        let col = w.column(j) / w.column(j).norm();
        range.set_column(dst, &col);
    }
    JacobiSvd { values, range }
}

/// Orthogonal projector onto the column space of `a`.
pub fn projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    let q = jacobi_svd(a).range;
    &q * q.transpose()
}

/// Eigenvalues of a symmetric positive semidefinite matrix.
pub fn psd_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    jacobi_svd(a).values
}

/// Expected block projector `sum_tau w_tau P_tau` over an explicit list.
pub fn expected_projector(a: &Tensor3, blocks: &[Vec<usize>], weights: &[f64]) -> DMatrix<f64> {
    let (m, _, p) = a.dims();
    let mut e = DMatrix::zeros(m * p, m * p);
    for (tau, w) in blocks.iter().zip(weights) {
        let block = Tensor3::from_fn(m, tau.len(), p, |i, j, k| a.get(i, tau[j], k));
        e += projector(&naive_bcirc(&block)) * *w;
    }
    e
}

/// `1 - lambda_min` of the expected projector restricted to the range of
/// `bcirc(A)`.
pub fn alpha_oracle(a: &Tensor3, blocks: &[Vec<usize>], weights: &[f64]) -> f64 {
    let q = jacobi_svd(&naive_bcirc(a)).range;
    let e = expected_projector(a, blocks, weights);
    let restricted = q.transpose() * e * &q;
    let lmin = psd_eigenvalues(&restricted).into_iter().fold(f64::INFINITY, f64::min);
    1.0 - lmin
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
