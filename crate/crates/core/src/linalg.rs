//! Dense SVD and symmetric eigenvalue routines (backed by `faer`) on
//! nalgebra matrices.

use faer::{Mat, Side};
use nalgebra::{Complex, DMatrix};

use crate::tensor::Matrix;

fn to_faer(m: &Matrix) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `M = U diag(s) V^T` with `k = min(rows, cols)` columns in `U` and `V`
/// and `s` descending.
pub(crate) struct ThinSvd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

pub(crate) fn thin_svd(m: &Matrix) -> ThinSvd {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return ThinSvd {
            u: Matrix::zeros(m.nrows(), 0),
            s: Vec::new(),
            v: Matrix::zeros(m.ncols(), 0),
        };
    }
    let dec = to_faer(m).thin_svd().expect("SVD iteration converges");
    let s = dec.S().column_vector();
    ThinSvd {
        u: from_faer(dec.U()),
        s: (0..k).map(|i| s[i]).collect(),
        v: from_faer(dec.V()),
    }
}

/// Singular values, descending.
pub(crate) fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.nrows().min(m.ncols()) == 0 {
        return Vec::new();
    }
    to_faer(m).singular_values().expect("SVD iteration converges")
}

/// Singular values of a complex matrix, descending.
pub(crate) fn complex_singular_values(m: &DMatrix<Complex<f64>>) -> Vec<f64> {
    if m.nrows().min(m.ncols()) == 0 {
        return Vec::new();
    }
    let f = Mat::<faer::c64>::from_fn(m.nrows(), m.ncols(), |i, j| {
        let z = m[(i, j)];
        faer::c64::new(z.re, z.im)
    });
    f.singular_values().expect("SVD iteration converges")
}

/// Eigenvalues of a symmetric matrix, ascending.
pub(crate) fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    to_faer(m)
        .self_adjoint_eigenvalues(Side::Lower)
        .expect("eigenvalue iteration converges")
}
