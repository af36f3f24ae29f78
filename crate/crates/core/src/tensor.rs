//! Dense third-order tensors and t-product algebra.
//!
//! Storage is frontal-slice-major: the depth index is outermost, then the
//! column, then the row. Each frontal slice is therefore a contiguous
//! column-major `m x n` block, which lets slice products go straight to
//! GEMM and makes `unfold` a sequence of contiguous copies.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

use crate::error::{Error, Result};

/// Dense real matrix used for matricizations (`bcirc`, `unfold`).
pub type Matrix = DMatrix<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    m: usize,
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(m: usize, n: usize, p: usize) -> Self {
        Tensor3 {
            m,
            n,
            p,
            data: vec![0.0; m * n * p],
        }
    }

    /// Builds a tensor from slice-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_vec(m: usize, n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m * n * p {
            return Err(Error::shape(
                "from_vec",
                format!("{} values for a {m}x{n}x{p} tensor", data.len()),
            ));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(idx));
        }
        Ok(Tensor3 { m, n, p, data })
    }

    pub fn from_fn(m: usize, n: usize, p: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor3::zeros(m, n, p);
        for k in 0..p {
            for j in 0..n {
                for i in 0..m {
                    t.data[(k * n + j) * m + i] = f(i, j, k);
                }
            }
        }
        t
    }

    /// `n x n x p` identity: first frontal slice is `I_n`, the rest zero.
    pub fn identity(n: usize, p: usize) -> Self {
        let mut t = Tensor3::zeros(n, n, p);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a tensor from its frontal slices.
    pub fn from_slices(slices: &[Matrix]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::shape("from_slices", "no slices"))?;
        let (m, n) = first.shape();
        let mut data = Vec::with_capacity(m * n * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (m, n) {
                return Err(Error::shape(
                    "from_slices",
                    format!("slice {k} is {:?}, expected {:?}", s.shape(), (m, n)),
                ));
            }
            data.extend_from_slice(s.as_slice());
        }
        Tensor3::from_vec(m, n, slices.len(), data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m, self.n, self.p)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.m && j < self.n && k < self.p);
        (k * self.n + j) * self.m + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    /// Frontal slice `k` as a contiguous column-major buffer.
    #[inline]
    pub fn slice(&self, k: usize) -> &[f64] {
        let s = self.m * self.n;
        &self.data[k * s..(k + 1) * s]
    }

    #[inline]
    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let s = self.m * self.n;
        &mut self.data[k * s..(k + 1) * s]
    }

    pub fn slice_view(&self, k: usize) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(self.slice(k), self.m, self.n)
    }

    pub fn slice_matrix(&self, k: usize) -> Matrix {
        self.slice_view(k).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// The `mp x np` block-circulant matrix with block `(i, j)` equal to
    /// frontal slice `(i - j) mod p`.
    pub fn bcirc(&self) -> Matrix {
        let (m, n, p) = self.dims();
        let mut out = Matrix::zeros(m * p, n * p);
        for bi in 0..p {
            for bj in 0..p {
                let k = (bi + p - bj) % p;
                out.view_mut((bi * m, bj * n), (m, n))
                    .copy_from(&self.slice_view(k));
            }
        }
        out
    }

    /// Stacks the frontal slices vertically into an `mp x n` matrix.
    pub fn unfold(&self) -> Matrix {
        let (m, n, p) = self.dims();
        let mut out = Matrix::zeros(m * p, n);
        for k in 0..p {
            out.view_mut((k * m, 0), (m, n))
                .copy_from(&self.slice_view(k));
        }
        out
    }

    /// Inverse of [`Tensor3::unfold`]: splits an `mp x l` matrix into `p`
    /// frontal slices of `m` rows each.
    pub fn fold(mat: &Matrix, p: usize) -> Result<Tensor3> {
        if p == 0 || !mat.nrows().is_multiple_of(p) {
            return Err(Error::shape(
                "fold",
                format!("{} rows are not divisible by depth {p}", mat.nrows()),
            ));
        }
        let m = mat.nrows() / p;
        let l = mat.ncols();
        let mut out = Tensor3::zeros(m, l, p);
        for k in 0..p {
            let block = mat.view((k * m, 0), (m, l));
            let dst = out.slice_mut(k);
            for j in 0..l {
                for i in 0..m {
                    dst[j * m + i] = block[(i, j)];
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose: transpose every frontal slice and reverse the
    /// order of slices `2..p`. For real data `bcirc(A^*) = bcirc(A)^T`.
    pub fn conj_transpose(&self) -> Tensor3 {
        let (m, n, p) = self.dims();
        let mut out = Tensor3::zeros(n, m, p);
        for k in 0..p {
            let src = (p - k) % p;
            let s = self.slice(src);
            let d = out.slice_mut(k);
            for j in 0..n {
                for i in 0..m {
                    d[i * n + j] = s[j * m + i];
                }
            }
        }
        out
    }

    pub fn inner(&self, other: &Tensor3) -> Result<f64> {
        self.check_same(other, "inner")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_norm_sq().sqrt()
    }

    /// `||self - other||_F` without allocating.
    pub fn dist(&self, other: &Tensor3) -> Result<f64> {
        self.check_same(other, "dist")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn scaled(&self, alpha: f64) -> Tensor3 {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor3) -> Result<()> {
        self.check_same(other, "axpy")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// `A_{:tau:}`: the lateral slices of `self` indexed by `tau`.
    pub fn column_block(&self, tau: &[usize]) -> Result<Tensor3> {
        check_index_set(tau, self.n)?;
        let (m, _, p) = self.dims();
        let mut out = Tensor3::zeros(m, tau.len(), p);
        for k in 0..p {
            let src = self.slice(k);
            let dst = out.slice_mut(k);
            for (c, &j) in tau.iter().enumerate() {
                dst[c * m..(c + 1) * m].copy_from_slice(&src[j * m..(j + 1) * m]);
            }
        }
        Ok(out)
    }

    /// `E_tau^* X`: the horizontal slices of `self` indexed by `tau`.
    pub fn gather_rows(&self, tau: &[usize]) -> Result<Tensor3> {
        check_index_set(tau, self.m)?;
        let (m, l, p) = self.dims();
        let mut out = Tensor3::zeros(tau.len(), l, p);
        let r = tau.len();
        for k in 0..p {
            let src = self.slice(k);
            let dst = out.slice_mut(k);
            for j in 0..l {
                for (c, &i) in tau.iter().enumerate() {
                    dst[j * r + c] = src[j * m + i];
                }
            }
        }
        Ok(out)
    }

    /// In place `self += alpha * E_tau U`: row `c` of `u` is added into
    /// row `tau[c]` of `self`.
    pub fn scatter_add_rows(&mut self, tau: &[usize], alpha: f64, u: &Tensor3) -> Result<()> {
        check_index_set(tau, self.m)?;
        if u.m != tau.len() || u.n != self.n || u.p != self.p {
            return Err(Error::shape(
                "scatter_add_rows",
                format!(
                    "update is {:?}, expected {}x{}x{}",
                    u.dims(),
                    tau.len(),
                    self.n,
                    self.p
                ),
            ));
        }
        let (m, l, p) = self.dims();
        let r = tau.len();
        for k in 0..p {
            let src = u.slice(k);
            let dst = self.slice_mut(k);
            for j in 0..l {
                for (c, &i) in tau.iter().enumerate() {
                    dst[j * m + i] += alpha * src[j * r + c];
                }
            }
        }
        Ok(())
    }

    /// Materialized selector `E_tau` (`n x |tau| x p`). Only for tests and
    /// reference computations; solvers use gather/scatter instead.
    pub fn selector(n: usize, tau: &[usize], p: usize) -> Result<Tensor3> {
        check_index_set(tau, n)?;
        let mut e = Tensor3::zeros(n, tau.len(), p);
        for (c, &j) in tau.iter().enumerate() {
            e.set(j, c, 0, 1.0);
        }
        Ok(e)
    }

    fn check_same(&self, other: &Tensor3, op: &'static str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.dims(), other.dims()),
            ));
        }
        Ok(())
    }

    /// Text serialization: a `T3 m n p` header line followed by the
    /// entries in slice-major order.
    pub fn to_text(&self) -> String {
        let mut s = format!("T3 {} {} {}\n", self.m, self.n, self.p);
        for chunk in self.data.chunks(self.m.max(1)) {
            let line: Vec<String> = chunk.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Tensor3> {
        let mut tokens = text.split_whitespace();
        match tokens.next() {
            Some("T3") => {}
            other => {
                return Err(Error::Parse(format!(
                    "expected `T3` header, found {other:?}"
                )))
            }
        }
        let mut dim = |name: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("missing dimension {name}")))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("dimension {name}: {e}")))
        };
        let (m, n, p) = (dim("m")?, dim("n")?, dim("p")?);
        let data = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("value `{t}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Tensor3::from_vec(m, n, p, data)
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read_text(path: impl AsRef<Path>) -> Result<Tensor3> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Tensor3::from_text(&text)
    }
}

/// Validates a nonempty, strictly increasing index set inside `0..n`.
pub fn check_index_set(tau: &[usize], n: usize) -> Result<()> {
    if tau.is_empty() {
        return Err(Error::InvalidIndexSet("empty".into()));
    }
    for w in tau.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidIndexSet(format!(
                "indices must be strictly increasing and unique, got {tau:?}"
            )));
        }
    }
    if let Some(&last) = tau.last() {
        if last >= n {
            return Err(Error::InvalidIndexSet(format!(
                "index {last} out of range for {n} columns"
            )));
        }
    }
    Ok(())
}

fn check_product(a: &Tensor3, b: &Tensor3) -> Result<()> {
    if a.p != b.p {
        return Err(Error::shape(
            "tprod",
            format!("depth {} vs {}", a.p, b.p),
        ));
    }
    if a.n != b.m {
        return Err(Error::shape(
            "tprod",
            format!("inner dimensions {} vs {}", a.n, b.m),
        ));
    }
    Ok(())
}

/// t-product `A * B` for `A: m x n x p`, `B: n x l x p`.
///
/// Evaluated as a direct cyclic convolution along the depth axis:
/// `C_k = sum_j A_j B_{(k - j) mod p}`, one GEMM per slice pair.
pub fn tprod(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    check_product(a, b)?;
    let mut out = Tensor3::zeros(a.m, b.n, a.p);
    tprod_acc(1.0, a, b, &mut out);
    Ok(out)
}

/// `out += alpha * (A * B)`; dimensions must already be conformable.
pub(crate) fn tprod_acc(alpha: f64, a: &Tensor3, b: &Tensor3, out: &mut Tensor3) {
    debug_assert!(check_product(a, b).is_ok());
    debug_assert_eq!(out.dims(), (a.m, b.n, a.p));
    let p = a.p;
    let (m, l) = (a.m, b.n);
    for k in 0..p {
        let mut c = DMatrixViewMut::from_slice(out.slice_mut(k), m, l);
        for ka in 0..p {
            let kb = (k + p - ka) % p;
            c.gemm(alpha, &a.slice_view(ka), &b.slice_view(kb), 1.0);
        }
    }
}

/// Reference t-product: `fold(bcirc(A) * unfold(B))`.
pub fn tprod_bcirc(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    check_product(a, b)?;
    Tensor3::fold(&(a.bcirc() * b.unfold()), a.p)
}

/// `X + E_tau U`.
pub fn apply_selector(x: &Tensor3, tau: &[usize], u: &Tensor3) -> Result<Tensor3> {
    let mut out = x.clone();
    out.scatter_add_rows(tau, 1.0, u)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(m: usize, n: usize, p: usize) -> Tensor3 {
        let mut c = 0.0;
        Tensor3::from_fn(m, n, p, |_, _, _| {
            c += 1.0;
            (c * 0.37_f64).sin()
        })
    }

    #[test]
    fn bcirc_of_tube() {
        let a = Tensor3::from_vec(1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let expected = Matrix::from_row_slice(3, 3, &[1.0, 3.0, 2.0, 2.0, 1.0, 3.0, 3.0, 2.0, 1.0]);
        assert_eq!(a.bcirc(), expected);
    }

    #[test]
    fn bcirc_depth_one_is_slice() {
        let a = seq(3, 2, 1);
        assert_eq!(a.bcirc(), a.slice_matrix(0));
    }

    #[test]
    fn bcirc_identity() {
        assert_eq!(Tensor3::identity(3, 4).bcirc(), Matrix::identity(12, 12));
    }

    #[test]
    fn unfold_stacks_slices() {
        let b = Tensor3::from_vec(2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(b.unfold(), Matrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]));
        let c = seq(3, 2, 1);
        assert_eq!(c.unfold(), c.slice_matrix(0));
    }

    #[test]
    fn fold_rejects_bad_rows() {
        let m = Matrix::zeros(7, 2);
        assert!(matches!(Tensor3::fold(&m, 3), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn tprod_tubes() {
        let a = Tensor3::from_vec(1, 1, 2, vec![1.0, 2.0]).unwrap();
        let b = Tensor3::from_vec(1, 1, 2, vec![3.0, 4.0]).unwrap();
        assert_eq!(tprod(&a, &b).unwrap().data(), &[11.0, 10.0]);
    }

    #[test]
    fn tprod_identity_and_depth_one() {
        let b = seq(4, 3, 5);
        assert_eq!(tprod(&Tensor3::identity(4, 5), &b).unwrap(), b);

        let a = seq(3, 4, 1);
        let b = seq(4, 2, 1);
        let expected = a.slice_matrix(0) * b.slice_matrix(0);
        let got = tprod(&a, &b).unwrap().slice_matrix(0);
        assert!((got - expected).norm() < 1e-12);
    }

    #[test]
    fn tprod_dimension_errors() {
        let a = seq(3, 4, 2);
        assert!(tprod(&a, &seq(3, 2, 2)).is_err());
        assert!(tprod(&a, &seq(4, 2, 3)).is_err());
    }

    #[test]
    fn conj_transpose_cases() {
        let t = Tensor3::from_vec(1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.conj_transpose().data(), &[1.0, 3.0, 2.0]);

        let a = seq(3, 2, 1);
        assert_eq!(a.conj_transpose().slice_matrix(0), a.slice_matrix(0).transpose());

        let a = seq(4, 3, 5);
        assert_eq!(a.conj_transpose().conj_transpose(), a);
        assert_eq!(a.conj_transpose().bcirc(), a.bcirc().transpose());
    }

    #[test]
    fn norms_and_inner() {
        let a = seq(3, 4, 2);
        approx::assert_relative_eq!(a.inner(&a).unwrap(), a.frob_norm_sq(), epsilon = 1e-14);
        approx::assert_relative_eq!(a.frob_norm(), a.unfold().norm(), epsilon = 1e-14);
        assert_eq!(Tensor3::zeros(2, 3, 4).frob_norm(), 0.0);
        assert!(a.inner(&seq(4, 3, 2)).is_err());
    }

    #[test]
    fn selectors() {
        let a = seq(5, 6, 3);
        let all: Vec<usize> = (0..6).collect();
        assert_eq!(a.column_block(&all).unwrap(), a);

        let tau = [1, 4];
        let e = Tensor3::selector(6, &tau, 3).unwrap();
        assert_eq!(tprod(&a, &e).unwrap(), a.column_block(&tau).unwrap());

        let u = seq(2, 3, 3);
        let x = apply_selector(&Tensor3::zeros(6, 3, 3), &tau, &u).unwrap();
        for k in 0..3 {
            for j in 0..3 {
                for i in 0..6 {
                    if !tau.contains(&i) {
                        assert_eq!(x.get(i, j, k), 0.0);
                    }
                }
            }
        }
        assert_eq!(x, tprod(&e, &u).unwrap());
        assert_eq!(x.gather_rows(&tau).unwrap(), u);
    }

    #[test]
    fn index_set_errors() {
        let a = seq(2, 4, 2);
        assert!(a.column_block(&[]).is_err());
        assert!(a.column_block(&[1, 1]).is_err());
        assert!(a.column_block(&[2, 1]).is_err());
        assert!(a.column_block(&[4]).is_err());
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        assert!(matches!(
            Tensor3::from_vec(1, 1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
        assert!(Tensor3::from_vec(1, 1, 2, vec![1.0]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let a = seq(3, 2, 4);
        let back = Tensor3::from_text(&a.to_text()).unwrap();
        assert_eq!(a, back);
        assert!(Tensor3::from_text("T3 1 1 2\n1.0").is_err());
        assert!(Tensor3::from_text("XX 1 1 1\n1.0").is_err());
    }
}
