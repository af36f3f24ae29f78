//! Convergence constants of the four solvers and the bound curves they
//! imply.
//!
//! Singular values of `bcirc(A)` are taken from the Fourier-diagonalized
//! form: `bcirc(A)` is unitarily similar to `diag(Â_0, ..., Â_{p-1})` where
//! `Â_k = sum_j A_j exp(-2 pi i j k / p)`, so its spectrum is the union of the
//! spectra of the `p` small complex slices. Projector quantities need the
//! dense matricization and cost `O((mp)^2 np)`.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linalg::{complex_singular_values, symmetric_eigenvalues, thin_svd};
use crate::oracle::RANK_TOL;
use crate::sampling::BlockSet;
use crate::solvers::FactorizedOperator;
use crate::tensor::{Matrix, Tensor3};

/// Relative tolerance under which two rates count as equal in the
/// piecewise factorized bounds.
pub const EQUAL_RATE_TOL: f64 = 1e-12;

/// Slices of the tensor after a DFT along the depth axis.
fn fourier_slices(a: &Tensor3) -> Vec<DMatrix<Complex<f64>>> {
    let (m, n, p) = a.dims();
    (0..p)
        .map(|k| {
            let mut out = DMatrix::<Complex<f64>>::zeros(m, n);
            for j in 0..p {
                let theta = -2.0 * std::f64::consts::PI * ((j * k) % p) as f64 / p as f64;
                let w = Complex::new(theta.cos(), theta.sin());
                let slice = a.slice_view(j);
                out.zip_apply(&slice, |o, s| *o += w * s);
            }
            out
        })
        .collect()
}

/// All `p * min(m, n)` singular values of `bcirc(A)`, descending.
pub fn bcirc_spectrum(a: &Tensor3) -> Vec<f64> {
    let p = a.depth();
    let slices = fourier_slices(a);
    let mut out = Vec::with_capacity(p * a.rows().min(a.cols()));
    for (k, s) in slices.into_iter().enumerate() {
        // frequencies k and p - k are complex conjugates with equal spectra
        if k > p / 2 {
            continue;
        }
        let sv = complex_singular_values(&s);
        let copies = if k == 0 || 2 * k == p { 1 } else { 2 };
        for _ in 0..copies {
            out.extend(sv.iter().copied());
        }
    }
    out.sort_by(|x, y| y.total_cmp(x));
    out
}

/// `sigma_max(bcirc(A))^2`.
pub fn sigma_max_sq(a: &Tensor3) -> f64 {
    bcirc_spectrum(a).first().map_or(0.0, |s| s * s)
}

/// `sigma_min(bcirc(A))^2` over all `p * min(m, n)` singular values.
pub fn sigma_min_sq(a: &Tensor3) -> f64 {
    bcirc_spectrum(a).last().map_or(0.0, |s| s * s)
}

/// Smallest singular value above the rank cutoff, or 0 for a zero tensor.
fn sigma_min_positive(spectrum: &[f64]) -> f64 {
    let smax = spectrum.first().copied().unwrap_or(0.0);
    spectrum
        .iter()
        .copied()
        .filter(|&s| s > RANK_TOL * smax && s > 0.0)
        .fold(0.0_f64, |acc, s| if acc == 0.0 { s } else { acc.min(s) })
}

/// `kappa^2(A) = sigma_max^2(bcirc(A^dagger)) sigma_max^2(bcirc(A))`, the
/// squared ratio of the extreme nonzero singular values. Zero for the zero
/// tensor, whose pseudoinverse vanishes.
pub fn kappa_sq(a: &Tensor3) -> f64 {
    let s = bcirc_spectrum(a);
    let smin = sigma_min_positive(&s);
    if smin == 0.0 {
        return 0.0;
    }
    (s[0] / smin).powi(2)
}

/// `sigma_max^2(bcirc(A^dagger)) = 1 / sigma_min+^2`.
pub fn pinv_sigma_max_sq(a: &Tensor3) -> f64 {
    let smin = sigma_min_positive(&bcirc_spectrum(a));
    if smin == 0.0 {
        0.0
    } else {
        1.0 / (smin * smin)
    }
}

/// `sigma^2 = max_tau sigma_max^2(bcirc(A_{:tau:}))`.
pub fn sigma_sq_blocks(a: &Tensor3, blocks: &BlockSet) -> Result<f64> {
    check_blocks(a, blocks)?;
    let mut best = 0.0_f64;
    for tau in blocks.blocks() {
        best = best.max(sigma_max_sq(&a.column_block(tau)?));
    }
    Ok(best)
}

fn check_blocks(a: &Tensor3, blocks: &BlockSet) -> Result<()> {
    if blocks.columns() != a.cols() {
        return Err(Error::InvalidBlockSet(format!(
            "block set covers {} columns, operator has {}",
            blocks.columns(),
            a.cols()
        )));
    }
    Ok(())
}

/// Orthonormal basis of the column space of `bcirc(A_{:tau:})`, failing
/// when that matricization is not of full column rank.
fn block_basis(a: &Tensor3, tau: &[usize]) -> Result<Matrix> {
    let m = a.column_block(tau)?.bcirc();
    let deficient = |ratio| Error::RankDeficientBlock {
        block: tau.to_vec(),
        ratio,
    };
    if m.nrows() < m.ncols() {
        return Err(deficient(0.0));
    }
    let dec = thin_svd(&m);
    let s = &dec.s;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    if smax.is_nan() || smax <= 0.0 || smin <= RANK_TOL * smax {
        return Err(deficient(if smax > 0.0 { smin / smax } else { 0.0 }));
    }
    Ok(dec.u)
}

/// Orthonormal basis of the column space of `bcirc(A)`.
fn range_basis(a: &Tensor3) -> Matrix {
    let dec = thin_svd(&a.bcirc());
    let s = &dec.s;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.len())
        .filter(|&i| s[i] > RANK_TOL * smax && s[i] > 0.0)
        .collect();
    dec.u.select_columns(keep.iter())
}

/// `E[bcirc(P_{A_{:tau:}})] = sum_tau w_tau M_tau (M_tau^T M_tau)^{-1} M_tau^T`
/// with `M_tau = bcirc(A_{:tau:})`, as a dense `mp x mp` matrix.
pub fn expected_projector(a: &Tensor3, blocks: &BlockSet) -> Result<Matrix> {
    check_blocks(a, blocks)?;
    let mp = a.rows() * a.depth();
    let mut e = Matrix::zeros(mp, mp);
    for (tau, &w) in blocks.blocks().iter().zip(blocks.weights()) {
        let q = block_basis(a, tau)?;
        e.gemm(w, &q, &q.transpose(), 1.0);
    }
    Ok(e)
}

/// Rate `alpha_A` of the projection solver.
///
/// Residual errors `A X - A X‡` live in the column space of `bcirc(A)`, so
/// the smallest eigenvalue of the expected projector is taken on that
/// subspace: `alpha = 1 - lambda_min(Q^T E[P] Q)` with `Q` an orthonormal
/// basis of the range. When `bcirc(A)` has full row rank this is
/// `1 - sigma_min(E[P])`.
pub fn alpha_trbgs(a: &Tensor3, blocks: &BlockSet) -> Result<f64> {
    check_blocks(a, blocks)?;
    let q = range_basis(a);
    let r = q.ncols();
    if r == 0 {
        return Ok(0.0);
    }
    let mut restricted = Matrix::zeros(r, r);
    for (tau, &w) in blocks.blocks().iter().zip(blocks.weights()) {
        let qb = q.transpose() * block_basis(a, tau)?;
        restricted.gemm(w, &qb, &qb.transpose(), 1.0);
    }
    let lmin = symmetric_eigenvalues(&restricted)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok((1.0 - lmin).clamp(0.0, 1.0))
}

/// `1 - (2w - w^2 sigma^2) (c_min / |T|) sigma_min^2(bcirc(A))`, the rate of
/// the averaging solver. Exceeds 1 when `2w - w^2 sigma^2 < 0`.
pub fn trbags_rate(a: &Tensor3, blocks: &BlockSet, omega: f64) -> Result<f64> {
    if !blocks.is_uniform() {
        return Err(Error::InvalidBlockSet(
            "the averaging rate assumes uniform sampling".into(),
        ));
    }
    let sigma_sq = sigma_sq_blocks(a, blocks)?;
    Ok(averaging_rate(
        omega,
        sigma_sq,
        blocks.c_min(),
        blocks.len(),
        sigma_min_sq(a),
    ))
}

fn averaging_gain(omega: f64, sigma_sq: f64, c_min: usize, num_blocks: usize, smin_sq: f64) -> f64 {
    (2.0 * omega - omega * omega * sigma_sq) * (c_min as f64 / num_blocks as f64) * smin_sq
}

fn averaging_rate(omega: f64, sigma_sq: f64, c_min: usize, num_blocks: usize, smin_sq: f64) -> f64 {
    1.0 - averaging_gain(omega, sigma_sq, c_min, num_blocks, smin_sq)
}

/// Constants for a plain system `A X = B`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceConstants {
    /// Projection-solver rate; `None` when some block is rank deficient.
    pub alpha: Option<f64>,
    pub sigma_sq: f64,
    pub sigma_min_sq: f64,
    pub kappa_sq: f64,
    pub omega: f64,
    /// Averaging-solver rate at `omega`; `None` for non-uniform blocks.
    pub trbags_rate: Option<f64>,
    pub c_min: usize,
    pub num_blocks: usize,
}

impl ConvergenceConstants {
    pub fn compute(a: &Tensor3, blocks: &BlockSet, omega: f64) -> Result<Self> {
        let alpha = match alpha_trbgs(a, blocks) {
            Ok(v) => Some(v),
            Err(Error::RankDeficientBlock { .. }) => None,
            Err(e) => return Err(e),
        };
        let sigma_sq = sigma_sq_blocks(a, blocks)?;
        let smin_sq = sigma_min_sq(a);
        let trbags_rate = blocks
            .is_uniform()
            .then(|| averaging_rate(omega, sigma_sq, blocks.c_min(), blocks.len(), smin_sq));
        Ok(ConvergenceConstants {
            alpha,
            sigma_sq,
            sigma_min_sq: smin_sq,
            kappa_sq: kappa_sq(a),
            omega,
            trbags_rate,
            c_min: blocks.c_min(),
            num_blocks: blocks.len(),
        })
    }

    /// `rate^k * initial_err_sq` for the chosen solver, or `None` when the
    /// rate is unavailable.
    pub fn bound(&self, kind: BoundKind, k: usize, initial_err_sq: f64) -> Option<f64> {
        let rate = match kind {
            BoundKind::Trbgs => self.alpha?,
            BoundKind::Trbags => self.trbags_rate?,
            BoundKind::FacInnerGs | BoundKind::FacInnerAgs => return None,
        };
        Some(powi(rate, k) * initial_err_sq)
    }

    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), fmt_num);
        vec![
            ("alpha".into(), opt(self.alpha)),
            ("sigma_sq".into(), fmt_num(self.sigma_sq)),
            ("sigma_min_sq".into(), fmt_num(self.sigma_min_sq)),
            ("kappa_sq".into(), fmt_num(self.kappa_sq)),
            ("omega".into(), fmt_num(self.omega)),
            ("trbags_rate".into(), opt(self.trbags_rate)),
            ("c_min".into(), self.c_min.to_string()),
            ("num_blocks".into(), self.num_blocks.to_string()),
        ]
    }
}

/// Which bound curve to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundKind {
    Trbgs,
    Trbags,
    /// Inner residual of the factorized projection solver.
    FacInnerGs,
    /// Inner residual of the factorized averaging solver.
    FacInnerAgs,
}

/// Constants for a factorized system `U V X = B`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedConstants {
    pub alpha_u: f64,
    pub alpha_v: f64,
    pub alpha_max: f64,
    pub alpha_min: f64,
    pub beta_u: f64,
    pub beta_v: f64,
    pub beta_max: f64,
    pub beta_min: f64,
    pub gamma_v: f64,
    pub sigma_sq_u: f64,
    pub sigma_sq_v: f64,
    pub sigma_min_sq_u: f64,
    pub sigma_min_sq_v: f64,
    pub c_min_u: usize,
    pub c_min_v: usize,
    pub num_blocks_u: usize,
    pub num_blocks_v: usize,
    pub kappa_sq_u: f64,
    pub kappa_sq_v: f64,
    /// `sigma_max^2(bcirc(V^dagger))`.
    pub pinv_sigma_max_sq_v: f64,
    pub omega1: f64,
    pub omega2: f64,
}

/// `min(a / b, b / a)` with the conventions needed when a rate vanishes.
/// Equal rates give 1.
pub fn rate_ratio_min(a: f64, b: f64) -> f64 {
    if rates_equal(a, b) {
        1.0
    } else if a == 0.0 || b == 0.0 {
        0.0
    } else {
        (a / b).min(b / a)
    }
}

/// Equality up to [`EQUAL_RATE_TOL`] relative to the larger rate.
pub fn rates_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= EQUAL_RATE_TOL * a.abs().max(b.abs())
}

/// Every constant of the factorized rate statements, computed from `U`,
/// `V`, their block sets and the averaging step sizes.
pub fn factorized_constants(
    op: &FactorizedOperator,
    t_u: &BlockSet,
    t_v: &BlockSet,
    omega1: f64,
    omega2: f64,
) -> Result<FactorizedConstants> {
    let (u, v) = (op.u(), op.v());
    let alpha_u = alpha_trbgs(u, t_u)?;
    let alpha_v = alpha_trbgs(v, t_v)?;
    let sigma_sq_u = sigma_sq_blocks(u, t_u)?;
    let sigma_sq_v = sigma_sq_blocks(v, t_v)?;
    let smin_sq_u = sigma_min_sq(u);
    let smin_sq_v = sigma_min_sq(v);
    let beta_u = averaging_rate(omega1, sigma_sq_u, t_u.c_min(), t_u.len(), smin_sq_u);
    let beta_v = 2.0 - 2.0 * averaging_gain(omega2, sigma_sq_v, t_v.c_min(), t_v.len(), smin_sq_v);
    let mut gamma_v = 0.0_f64;
    for nu in t_v.blocks() {
        let block = v.column_block(nu)?;
        gamma_v = gamma_v.max(2.0 * sigma_max_sq(&block) * sigma_max_sq(&block.conj_transpose()));
    }
    Ok(FactorizedConstants {
        alpha_u,
        alpha_v,
        alpha_max: alpha_u.max(alpha_v),
        alpha_min: rate_ratio_min(alpha_u, alpha_v),
        beta_u,
        beta_v,
        beta_max: beta_u.max(beta_v),
        beta_min: rate_ratio_min(beta_u, beta_v),
        gamma_v,
        sigma_sq_u,
        sigma_sq_v,
        sigma_min_sq_u: smin_sq_u,
        sigma_min_sq_v: smin_sq_v,
        c_min_u: t_u.c_min(),
        c_min_v: t_v.c_min(),
        num_blocks_u: t_u.len(),
        num_blocks_v: t_v.len(),
        kappa_sq_u: kappa_sq(u),
        kappa_sq_v: kappa_sq(v),
        pinv_sigma_max_sq_v: pinv_sigma_max_sq(v),
        omega1,
        omega2,
    })
}

/// `x^k` for a nonnegative integer `k`, with `0^0 = 1`.
fn powi(x: f64, k: usize) -> f64 {
    x.powi(i32::try_from(k).unwrap_or(i32::MAX))
}

impl FactorizedConstants {
    /// Outer residual bound `rate^k * initial` with `alpha_U` for the
    /// projection solver and `beta_U` for the averaging one.
    pub fn outer_bound(&self, kind: BoundKind, k: usize, initial_err_sq: f64) -> Option<f64> {
        let rate = match kind {
            BoundKind::Trbgs | BoundKind::FacInnerGs => self.alpha_u,
            BoundKind::Trbags | BoundKind::FacInnerAgs => self.beta_u,
        };
        Some(powi(rate, k) * initial_err_sq)
    }

    /// Bound on `E ||V X_k - V X‡||^2` starting from zero iterates:
    ///
    /// `r_V^k ||V X‡||^2 + c kappa^2(U) r_max^k r_min / (1 - r_min) ||Z‡||^2`
    /// for unequal rates and `r_V^k ||V X‡||^2 + c kappa^2(U) k r_max^k ||Z‡||^2`
    /// for equal rates, where `r` is `alpha` and `c = 1` for the projection
    /// solver, `r` is `beta` and `c = omega2^2 gamma_V` for the averaging one.
    pub fn inner_bound(&self, kind: BoundKind, k: usize, vx_star_sq: f64, z_star_sq: f64) -> Option<f64> {
        let (r_u, r_v, r_max, r_min, c) = match kind {
            BoundKind::FacInnerGs => (self.alpha_u, self.alpha_v, self.alpha_max, self.alpha_min, 1.0),
            BoundKind::FacInnerAgs => (
                self.beta_u,
                self.beta_v,
                self.beta_max,
                self.beta_min,
                self.omega2 * self.omega2 * self.gamma_v,
            ),
            BoundKind::Trbgs | BoundKind::Trbags => return None,
        };
        let coupling = if rates_equal(r_u, r_v) {
            k as f64 * powi(r_max, k)
        } else {
            powi(r_max, k) * r_min / (1.0 - r_min)
        };
        Some(powi(r_v, k) * vx_star_sq + c * self.kappa_sq_u * coupling * z_star_sq)
    }

    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let f = |name: &str, v: f64| (name.to_string(), fmt_num(v));
        let i = |name: &str, v: usize| (name.to_string(), v.to_string());
        vec![
            f("alpha_u", self.alpha_u),
            f("alpha_v", self.alpha_v),
            f("alpha_max", self.alpha_max),
            f("alpha_min", self.alpha_min),
            f("beta_u", self.beta_u),
            f("beta_v", self.beta_v),
            f("beta_max", self.beta_max),
            f("beta_min", self.beta_min),
            f("gamma_v", self.gamma_v),
            f("sigma_sq_u", self.sigma_sq_u),
            f("sigma_sq_v", self.sigma_sq_v),
            f("sigma_min_sq_u", self.sigma_min_sq_u),
            f("sigma_min_sq_v", self.sigma_min_sq_v),
            i("c_min_u", self.c_min_u),
            i("c_min_v", self.c_min_v),
            i("num_blocks_u", self.num_blocks_u),
            i("num_blocks_v", self.num_blocks_v),
            f("kappa_sq_u", self.kappa_sq_u),
            f("kappa_sq_v", self.kappa_sq_v),
            f("pinv_sigma_max_sq_v", self.pinv_sigma_max_sq_v),
            f("omega1", self.omega1),
            f("omega2", self.omega2),
        ]
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:.12e}")
}
