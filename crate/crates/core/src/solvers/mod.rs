//! Randomized block Gauss-Seidel solvers for `A * X = B` and for the
//! factorized system `U * V * X = B`.
//!
//! All four solvers start from zero iterates, draw blocks with a seeded
//! generator, and record a [`ConvergenceTrace`] every `trace_every`
//! iterations (plus the final one). A run whose iterates stop being finite
//! is cut short and reported as [`RunStatus::Diverged`].

mod factorized;
mod plain;
mod stepper;

pub use factorized::{factrbags, factrbgs, FactorizedOracle, FactorizedSolver};
pub use plain::{trbags, trbgs, PlainSolver};
pub use stepper::Update;

use std::time::Instant;

use crate::error::{Error, Result};
use crate::tensor::{tprod, Tensor3};

/// How the residual `A X - B` is maintained between iterations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ResidualMode {
    /// Evaluate `tprod(A, X)` from scratch after every update.
    #[default]
    Recompute,
    /// Add `tprod(A_tau, delta)` for the updated block only.
    Incremental,
}

impl std::str::FromStr for ResidualMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recompute" => Ok(ResidualMode::Recompute),
            "incremental" => Ok(ResidualMode::Incremental),
            other => Err(Error::InvalidConfig(format!("unknown residual mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// TRBAGS step size.
    pub omega: f64,
    /// FacTRBAGS outer step size.
    pub omega1: f64,
    /// FacTRBAGS inner step size.
    pub omega2: f64,
    pub seed: u64,
    pub trace_every: usize,
    pub residual_mode: ResidualMode,
    /// When false every `wall_ns` is written as 0, which keeps traces
    /// byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 1000,
            omega: 1.0,
            omega1: 1.0,
            omega2: 1.0,
            seed: 0,
            trace_every: 1,
            residual_mode: ResidualMode::Recompute,
            record_wall_time: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.trace_every == 0 {
            return Err(Error::InvalidConfig("trace_every must be at least 1".into()));
        }
        for (name, w) in [("omega", self.omega), ("omega1", self.omega1), ("omega2", self.omega2)] {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {w}")));
            }
        }
        Ok(())
    }

    fn records_at(&self, k: usize) -> bool {
        k == 0 || k.is_multiple_of(self.trace_every) || k == self.max_iters
    }
}

/// Errors of the outer system `U Z = B` in a factorized run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OuterRecord {
    pub rel_err: Option<f64>,
    pub res_err: Option<f64>,
    pub raw_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// `||X - X‡|| / ||X‡||`, present when an oracle was supplied.
    pub rel_err: Option<f64>,
    /// `||A X - A X‡||`, present when an oracle was supplied.
    pub res_err: Option<f64>,
    /// `||A X - B||`.
    pub raw_residual: f64,
    pub wall_ns: u64,
    pub outer: Option<OuterRecord>,
}

impl TraceRecord {
    fn is_finite(&self) -> bool {
        let opt = |v: Option<f64>| v.is_none_or(f64::is_finite);
        let outer = self
            .outer
            .is_none_or(|o| opt(o.rel_err) && opt(o.res_err) && o.raw_residual.is_finite());
        opt(self.rel_err) && opt(self.res_err) && self.raw_residual.is_finite() && outer
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub label: String,
    records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn new(label: impl Into<String>) -> Self {
        ConvergenceTrace {
            label: label.into(),
            records: Vec::new(),
        }
    }

    /// Appends a record. Iteration numbers must increase strictly and all
    /// values must be finite.
    pub fn push(&mut self, rec: TraceRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if rec.iter <= last.iter {
                return Err(Error::InvalidConfig(format!(
                    "trace iteration {} does not follow {}",
                    rec.iter, last.iter
                )));
            }
        }
        if !rec.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "non-finite trace record at iteration {}",
                rec.iter
            )));
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first(&self) -> Option<&TraceRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn at(&self, iter: usize) -> Option<&TraceRecord> {
        self.records
            .binary_search_by_key(&iter, |r| r.iter)
            .ok()
            .map(|i| &self.records[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// Iterates became non-finite at this iteration; the trace stops at the
    /// last finite record.
    Diverged { iter: usize },
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub x: Tensor3,
    /// Final outer iterate of a factorized run.
    pub z: Option<Tensor3>,
    pub trace: ConvergenceTrace,
    pub status: RunStatus,
}

/// Measurement operator given as `A = U * V`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedOperator {
    u: Tensor3,
    v: Tensor3,
}

impl FactorizedOperator {
    pub fn new(u: Tensor3, v: Tensor3) -> Result<Self> {
        if u.cols() != v.rows() || u.depth() != v.depth() {
            return Err(Error::shape(
                "FactorizedOperator",
                format!("U is {:?}, V is {:?}", u.dims(), v.dims()),
            ));
        }
        Ok(FactorizedOperator { u, v })
    }

    pub fn u(&self) -> &Tensor3 {
        &self.u
    }

    pub fn v(&self) -> &Tensor3 {
        &self.v
    }

    /// `U * V`.
    pub fn compose(&self) -> Result<Tensor3> {
        tprod(&self.u, &self.v)
    }

    /// `U * (V * X)`.
    pub fn apply(&self, x: &Tensor3) -> Result<Tensor3> {
        tprod(&self.u, &tprod(&self.v, x)?)
    }
}

/// `tprod(A, X) - B`, evaluated from scratch.
pub fn residual(a: &Tensor3, x: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    let mut r = tprod(a, x)?;
    r.axpy(-1.0, b).map_err(|_| {
        Error::shape(
            "residual",
            format!("A X is {:?}, B is {:?}", r.dims(), b.dims()),
        )
    })?;
    Ok(r)
}

/// Reference solution for a plain run together with `A X‡`.
#[derive(Clone, Debug)]
pub(crate) struct PlainOracle {
    x_star: Tensor3,
    x_star_norm: f64,
    ax_star: Tensor3,
}

impl PlainOracle {
    pub(crate) fn new(a: &Tensor3, x_star: &Tensor3) -> Result<Self> {
        let ax_star = tprod(a, x_star)?;
        Ok(PlainOracle {
            x_star: x_star.clone(),
            x_star_norm: x_star.frob_norm(),
            ax_star,
        })
    }

    /// `(rel_err, res_err)` for iterate `x` with product `ax = A x`.
    pub(crate) fn errors(&self, x: &Tensor3, ax: &Tensor3) -> (f64, f64) {
        let diff = dist(x, &self.x_star);
        let rel = if self.x_star_norm > 0.0 { diff / self.x_star_norm } else { diff };
        (rel, dist(ax, &self.ax_star))
    }
}

/// Frobenius distance of equally shaped tensors.
pub(crate) fn dist(a: &Tensor3, b: &Tensor3) -> f64 {
    debug_assert_eq!(a.dims(), b.dims());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Wall clock that reads as zero when timing is disabled.
pub(crate) struct Clock {
    start: Option<Instant>,
}

impl Clock {
    pub(crate) fn new(enabled: bool) -> Self {
        Clock {
            start: enabled.then(Instant::now),
        }
    }

    pub(crate) fn elapsed_ns(&self) -> u64 {
        self.start
            .map(|s| u64::try_from(s.elapsed().as_nanos()).unwrap_or(u64::MAX))
            .unwrap_or(0)
    }
}

/// Logs a warning when `2w - w^2 s^2 <= 0`, the regime where the averaging
/// rate bound gives no contraction.
pub(crate) fn warn_step_size(name: &str, omega: f64, sigma_sq: f64) {
    let gain = 2.0 * omega - omega * omega * sigma_sq;
    if gain <= 0.0 {
        log::warn!(
            "{name} = {omega} gives 2w - w^2 sigma^2 = {gain:.3e} <= 0 (sigma^2 = {sigma_sq:.3e}); no convergence guarantee"
        );
    }
}
