//! Synthetic regression systems with Gaussian data, including the
//! factorized case grid.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::oracle::range_split;
use crate::solvers::FactorizedOperator;
use crate::tensor::{tprod, Tensor3};

/// Scale of the orthogonal perturbation added to inconsistent systems.
pub const NOISE_SCALE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub enum SystemOperator {
    Plain(Tensor3),
    Factorized(FactorizedOperator),
}

#[derive(Clone, Debug)]
pub struct SyntheticSystem {
    pub operator: SystemOperator,
    pub b: Tensor3,
    pub x_gen: Tensor3,
    /// Zero for consistent systems.
    pub b_perp: Tensor3,
    pub case_label: String,
    /// Whether the convergence theorems cover this configuration.
    pub guaranteed: bool,
}

impl SyntheticSystem {
    /// The plain operator, or `None` for factorized systems.
    pub fn plain(&self) -> Option<&Tensor3> {
        match &self.operator {
            SystemOperator::Plain(a) => Some(a),
            SystemOperator::Factorized(_) => None,
        }
    }

    pub fn factorized(&self) -> Option<&FactorizedOperator> {
        match &self.operator {
            SystemOperator::Plain(_) => None,
            SystemOperator::Factorized(f) => Some(f),
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.b_perp.frob_norm() == 0.0
    }
}

pub fn gaussian_tensor<R: Rng + ?Sized>(m: usize, n: usize, p: usize, rng: &mut R) -> Tensor3 {
    let data = (0..m * n * p).map(|_| rng.sample(StandardNormal)).collect();
    Tensor3::from_vec(m, n, p, data).expect("finite gaussian samples")
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "dimensions must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

/// `A: m x n x p` and `X_gen: n x l x p` Gaussian, `B = A X_gen`.
pub fn make_consistent<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    l: usize,
    p: usize,
    rng: &mut R,
) -> Result<SyntheticSystem> {
    check_dims(&[m, n, l, p])?;
    let a = gaussian_tensor(m, n, p, rng);
    let x_gen = gaussian_tensor(n, l, p, rng);
    let b = tprod(&a, &x_gen)?;
    Ok(SyntheticSystem {
        operator: SystemOperator::Plain(a),
        b,
        x_gen,
        b_perp: Tensor3::zeros(m, l, p),
        case_label: format!("consistent {m}x{n}x{p}"),
        guaranteed: true,
    })
}

/// Component of a Gaussian draw orthogonal to `R_l(A)`, rejecting draws
/// whose orthogonal part vanishes.
fn orthogonal_noise<R: Rng + ?Sized>(a: &Tensor3, l: usize, rng: &mut R) -> Result<Tensor3> {
    let b_tilde = gaussian_tensor(a.rows(), l, a.depth(), rng);
    let b_perp = range_split(a, &b_tilde)?.y_perp;
    let ratio = b_perp.frob_norm() / b_tilde.frob_norm();
    if ratio <= 1e-10 {
        return Err(Error::DegenerateNoise { ratio });
    }
    Ok(b_perp)
}

/// `B = A X_gen + scale * B_perp` with `B_perp` the residual of projecting
/// a Gaussian tensor onto `R_l(A)`.
pub fn make_inconsistent<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    l: usize,
    p: usize,
    rng: &mut R,
    scale: f64,
) -> Result<SyntheticSystem> {
    check_dims(&[m, n, l, p])?;
    let a = gaussian_tensor(m, n, p, rng);
    let x_gen = gaussian_tensor(n, l, p, rng);
    let b_perp = orthogonal_noise(&a, l, rng)?;
    let mut b = tprod(&a, &x_gen)?;
    b.axpy(scale, &b_perp)?;
    Ok(SyntheticSystem {
        operator: SystemOperator::Plain(a),
        b,
        x_gen,
        b_perp,
        case_label: format!("inconsistent {m}x{n}x{p}"),
        guaranteed: true,
    })
}

/// The six realizable cells of the factorized experiment grid. `X` is
/// always `20 x 10 x 30`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Table1Case {
    /// U over, V under, A under (`m = 10`, `m1 = 5`).
    UOverVUnderAUnder,
    /// U over, V under, A over (`m = 30`, `m1 = 15`).
    UOverVUnderAOver,
    /// U over, V over, A over (`m = 30`, `m1 = 25`).
    UOverVOverAOver,
    /// U under, V over, A under (`m = 10`, `m1 = 25`). Not covered.
    UUnderVOverAUnder,
    /// U under, V over, A over (`m = 30`, `m1 = 35`). Not covered.
    UUnderVOverAOver,
    /// U under, V under, A under (`m = 10`, `m1 = 15`). Not covered.
    UUnderVUnderAUnder,
}

impl Table1Case {
    pub const ALL: [Table1Case; 6] = [
        Table1Case::UOverVUnderAUnder,
        Table1Case::UOverVUnderAOver,
        Table1Case::UOverVOverAOver,
        Table1Case::UUnderVOverAUnder,
        Table1Case::UUnderVOverAOver,
        Table1Case::UUnderVUnderAUnder,
    ];

    /// `(m, m1, n, l, p)`.
    pub fn dims(self) -> (usize, usize, usize, usize, usize) {
        let (m, m1) = match self {
            Table1Case::UOverVUnderAUnder => (10, 5),
            Table1Case::UOverVUnderAOver => (30, 15),
            Table1Case::UOverVOverAOver => (30, 25),
            Table1Case::UUnderVOverAUnder => (10, 25),
            Table1Case::UUnderVOverAOver => (30, 35),
            Table1Case::UUnderVUnderAUnder => (10, 15),
        };
        (m, m1, 20, 10, 30)
    }

    /// False for the gray cells where the theorems give no guarantee.
    pub fn guaranteed(self) -> bool {
        matches!(
            self,
            Table1Case::UOverVUnderAUnder | Table1Case::UOverVUnderAOver | Table1Case::UOverVOverAOver
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            Table1Case::UOverVUnderAUnder => "u-over-v-under-a-under",
            Table1Case::UOverVUnderAOver => "u-over-v-under-a-over",
            Table1Case::UOverVOverAOver => "u-over-v-over-a-over",
            Table1Case::UUnderVOverAUnder => "u-under-v-over-a-under",
            Table1Case::UUnderVOverAOver => "u-under-v-over-a-over",
            Table1Case::UUnderVUnderAUnder => "u-under-v-under-a-under",
        }
    }
}

impl fmt::Display for Table1Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Table1Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Table1Case::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown factorized case `{s}`")))
    }
}

/// Builds a factorized case: Gaussian `U`, `V`, `X_gen`, and
/// `B = U V X_gen + 1e-4 B_perp` with `B_perp` orthogonal to `R_l(UV)`.
///
/// When `bcirc(UV)` has full row rank there is no orthogonal complement and
/// the system comes out consistent (`b_perp = 0`).
pub fn make_factorized_case<R: Rng + ?Sized>(case: Table1Case, rng: &mut R) -> Result<SyntheticSystem> {
    let (m, m1, n, l, p) = case.dims();
    let u = gaussian_tensor(m, m1, p, rng);
    let v = gaussian_tensor(m1, n, p, rng);
    let x_gen = gaussian_tensor(n, l, p, rng);
    let op = FactorizedOperator::new(u, v)?;
    let a = op.compose()?;
    let b_perp = match orthogonal_noise(&a, l, rng) {
        Ok(bp) => bp,
        Err(Error::DegenerateNoise { .. }) => Tensor3::zeros(m, l, p),
        Err(e) => return Err(e),
    };
    let mut b = tprod(&a, &x_gen)?;
    b.axpy(NOISE_SCALE, &b_perp)?;
    Ok(SyntheticSystem {
        operator: SystemOperator::Factorized(op),
        b,
        x_gen,
        b_perp,
        case_label: case.label().to_string(),
        guaranteed: case.guaranteed(),
    })
}
