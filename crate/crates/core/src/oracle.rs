//! Exact reference solutions through the matricized system
//! `bcirc(A) unfold(X) = unfold(B)`.
//!
//! Everything here works on dense `bcirc` matrices and costs
//! `O((mp)(np) min(mp, np))`; it is meant for desk-scale problems and for
//! per-block factorizations, never for the iteration hot path.

use crate::error::{Error, Result};
use crate::linalg::{singular_values, thin_svd};
use crate::tensor::{tprod, Matrix, Tensor3};

/// Singular values below `RANK_TOL * sigma_max` are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct OracleSolution {
    /// Least-norm minimizer of `||A X - B||_F`.
    pub x_star: Tensor3,
    pub residual_norm: f64,
    /// Numerical rank of `bcirc(A)`.
    pub rank: usize,
}

#[derive(Clone, Debug)]
pub struct RangeSplit {
    /// Orthogonal projection of `Y` onto `R_l(A)`.
    pub y_range: Tensor3,
    /// `Y - y_range`, annihilated by `A^*`.
    pub y_perp: Tensor3,
}

/// Singular values of `bcirc(A)` in descending order.
pub fn bcirc_singular_values(a: &Tensor3) -> Vec<f64> {
    singular_values(&a.bcirc())
}

/// Moore-Penrose pseudoinverse with the crate-wide rank cutoff. Returns
/// the pseudoinverse and the numerical rank.
pub fn pinv_matrix(mat: &Matrix) -> (Matrix, usize) {
    let dec = thin_svd(mat);
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let cutoff = RANK_TOL * smax;
    let mut scaled = dec.u.clone();
    let mut rank = 0;
    for (idx, &s) in dec.s.iter().enumerate() {
        let mut col = scaled.column_mut(idx);
        if s > cutoff && s > 0.0 {
            rank += 1;
            col /= s;
        } else {
            col.fill(0.0);
        }
    }
    // V diag(1/s) U^T over the retained singular triplets
    (&dec.v * scaled.transpose(), rank)
}

/// Minimum-norm minimizer of `||A X - B||_F^2`, computed by applying the
/// pseudoinverse of `bcirc(A)` to `unfold(B)`.
pub fn least_norm_solve(a: &Tensor3, b: &Tensor3) -> Result<OracleSolution> {
    if a.rows() != b.rows() || a.depth() != b.depth() {
        return Err(Error::shape(
            "least_norm_solve",
            format!("A is {:?}, B is {:?}", a.dims(), b.dims()),
        ));
    }
    let (pinv, rank) = pinv_matrix(&a.bcirc());
    let x_star = Tensor3::fold(&(pinv * b.unfold()), a.depth())?;
    let residual_norm = tprod(a, &x_star)?.dist(b)?;
    Ok(OracleSolution {
        x_star,
        residual_norm,
        rank,
    })
}

/// Cached solver for the normal equations of one column block:
/// `R -> (A_tau^* A_tau)^{-1} A_tau^* R`.
#[derive(Clone, Debug)]
pub struct BlockPinv {
    block: Tensor3,
    adjoint: Tensor3,
    gram_inv: Matrix,
}

impl BlockPinv {
    /// Factorizes `bcirc(A_block)^T bcirc(A_block)`. Fails with
    /// [`Error::RankDeficientBlock`] when `sigma_min <= RANK_TOL * sigma_max`.
    pub fn new(block: Tensor3) -> Result<Self> {
        Self::with_label(block, Vec::new())
    }

    pub(crate) fn with_label(block: Tensor3, tau: Vec<usize>) -> Result<Self> {
        let m = block.bcirc();
        if m.nrows() < m.ncols() {
            return Err(Error::RankDeficientBlock {
                block: tau,
                ratio: 0.0,
            });
        }
        let dec = thin_svd(&m);
        let s = &dec.s;
        let smax = s.iter().copied().fold(0.0, f64::max);
        let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
        if smax.is_nan() || smax <= 0.0 || smin <= RANK_TOL * smax {
            return Err(Error::RankDeficientBlock {
                block: tau,
                ratio: if smax > 0.0 { smin / smax } else { 0.0 },
            });
        }
        // (M^T M)^{-1} = V diag(1/s^2) V^T
        let mut scaled = dec.v.clone();
        for (i, mut col) in scaled.column_iter_mut().enumerate() {
            col /= s[i] * s[i];
        }
        let gram_inv = scaled * dec.v.transpose();
        let adjoint = block.conj_transpose();
        Ok(BlockPinv {
            block,
            adjoint,
            gram_inv,
        })
    }

    pub fn block(&self) -> &Tensor3 {
        &self.block
    }

    pub fn adjoint(&self) -> &Tensor3 {
        &self.adjoint
    }

    /// `pinv(bcirc(A_block))` as an explicit matrix.
    pub(crate) fn matrix(&self) -> Matrix {
        &self.gram_inv * self.block.bcirc().transpose()
    }

    pub fn apply(&self, r: &Tensor3) -> Result<Tensor3> {
        let rhs = tprod(&self.adjoint, r)?.unfold();
        Tensor3::fold(&(&self.gram_inv * rhs), r.depth())
    }
}

/// `(A^*A)^{-1} A^* R` for a block with full column rank in the `bcirc`
/// sense.
pub fn pinv_apply(a_block: &Tensor3, r: &Tensor3) -> Result<Tensor3> {
    BlockPinv::new(a_block.clone())?.apply(r)
}

/// Splits `Y` into its component in `R_l(A)` and the orthogonal remainder.
pub fn range_split(a: &Tensor3, y: &Tensor3) -> Result<RangeSplit> {
    let sol = least_norm_solve(a, y)?;
    let y_range = tprod(a, &sol.x_star)?;
    let y_perp = y.sub(&y_range)?;
    Ok(RangeSplit { y_range, y_perp })
}
