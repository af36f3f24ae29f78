use crate::analysis::sigma_sq_blocks;
use crate::error::{Error, Result};
use crate::oracle::least_norm_solve;
use crate::sampling::{seeded_rng, BlockSet, SolverRng};
use crate::solvers::stepper::{BlockStepper, Update};
use crate::solvers::{
    dist, warn_step_size, Clock, ConvergenceTrace, FactorizedOperator, OuterRecord, PlainOracle,
    RunStatus, SolveOutput, SolverConfig, TraceRecord,
};
use crate::tensor::{tprod, Tensor3};

/// Reference solutions of the outer system `U Z = B` and inner system
/// `V X = Z‡`.
#[derive(Clone, Debug)]
pub struct FactorizedOracle {
    pub z_star: Tensor3,
    pub x_star: Tensor3,
}

impl FactorizedOracle {
    /// `Z‡ = argmin ||U Z - B||`, then `X‡ = argmin ||V X - Z‡||`, both of
    /// least norm.
    pub fn solve(op: &FactorizedOperator, b: &Tensor3) -> Result<Self> {
        let z_star = least_norm_solve(op.u(), b)?.x_star;
        let x_star = least_norm_solve(op.v(), &z_star)?.x_star;
        Ok(FactorizedOracle { z_star, x_star })
    }
}

struct Oracles {
    outer: PlainOracle,
    /// Inner errors measured through `A = U V`.
    inner: PlainOracle,
}

/// One FacTRBGS or FacTRBAGS run.
pub struct FactorizedSolver {
    op: FactorizedOperator,
    outer: BlockStepper,
    inner: BlockStepper,
    b: Tensor3,
    rng: SolverRng,
    oracles: Option<Oracles>,
    cfg: SolverConfig,
    label: &'static str,
    iter: usize,
}

impl FactorizedSolver {
    fn new(
        op: &FactorizedOperator,
        b: &Tensor3,
        t_u: &BlockSet,
        t_v: &BlockSet,
        cfg: &SolverConfig,
        oracle: Option<&FactorizedOracle>,
        averaging: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        let (u, v) = (op.u(), op.v());
        if u.rows() != b.rows() || u.depth() != b.depth() {
            return Err(Error::shape(
                "factorized solver",
                format!("U is {:?}, B is {:?}", u.dims(), b.dims()),
            ));
        }
        let l = b.cols();
        let (outer_update, inner_update, label) = if averaging {
            if !t_u.is_uniform() || !t_v.is_uniform() {
                return Err(Error::InvalidBlockSet(
                    "the averaging solver samples blocks uniformly".into(),
                ));
            }
            (
                Update::Averaging { omega: cfg.omega1 },
                Update::Averaging { omega: cfg.omega2 },
                "factrbags",
            )
        } else {
            (Update::Projection, Update::Projection, "factrbgs")
        };
        let outer = BlockStepper::new(u, t_u, l, outer_update, cfg.residual_mode)?;
        let inner = BlockStepper::new(v, t_v, l, inner_update, cfg.residual_mode)?;
        let oracles = match oracle {
            Some(o) => {
                if o.z_star.dims() != outer.x().dims() || o.x_star.dims() != inner.x().dims() {
                    return Err(Error::shape(
                        label,
                        format!(
                            "oracle Z is {:?}, X is {:?}",
                            o.z_star.dims(),
                            o.x_star.dims()
                        ),
                    ));
                }
                Some(Oracles {
                    outer: PlainOracle::new(u, &o.z_star)?,
                    inner: PlainOracle::new(&op.compose()?, &o.x_star)?,
                })
            }
            None => None,
        };
        if averaging {
            warn_step_size("omega1", cfg.omega1, sigma_sq_blocks(u, t_u)?);
            warn_step_size("omega2", cfg.omega2, sigma_sq_blocks(v, t_v)?);
        }
        Ok(FactorizedSolver {
            op: op.clone(),
            outer,
            inner,
            b: b.clone(),
            rng: seeded_rng(cfg.seed),
            oracles,
            cfg: cfg.clone(),
            label,
            iter: 0,
        })
    }

    /// FacTRBGS: projection steps on both systems.
    pub fn factrbgs(
        op: &FactorizedOperator,
        b: &Tensor3,
        t_u: &BlockSet,
        t_v: &BlockSet,
        cfg: &SolverConfig,
        oracle: Option<&FactorizedOracle>,
    ) -> Result<Self> {
        Self::new(op, b, t_u, t_v, cfg, oracle, false)
    }

    /// FacTRBAGS: averaging steps with `omega1` on the outer system and
    /// `omega2` on the inner one.
    pub fn factrbags(
        op: &FactorizedOperator,
        b: &Tensor3,
        t_u: &BlockSet,
        t_v: &BlockSet,
        cfg: &SolverConfig,
        oracle: Option<&FactorizedOracle>,
    ) -> Result<Self> {
        Self::new(op, b, t_u, t_v, cfg, oracle, true)
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn x(&self) -> &Tensor3 {
        self.inner.x()
    }

    pub fn z(&self) -> &Tensor3 {
        self.outer.x()
    }

    /// Current `U Z`.
    pub fn uz(&self) -> &Tensor3 {
        self.outer.ax()
    }

    /// Current `V X`.
    pub fn vx(&self) -> &Tensor3 {
        self.inner.ax()
    }

    /// One iteration: sample `mu` then `nu`, update `Z` from the residual of
    /// the previous `Z`, then update `X` against the new `Z`. Returns the
    /// sampled block indices.
    pub fn step(&mut self) -> Result<(usize, usize)> {
        let mu = self.outer.blocks().sample(&mut self.rng);
        let nu = self.inner.blocks().sample(&mut self.rng);
        self.step_blocks(mu, nu)?;
        Ok((mu, nu))
    }

    /// One iteration on chosen blocks. Returns false when an iterate stopped
    /// being finite.
    pub fn step_blocks(&mut self, mu: usize, nu: usize) -> Result<bool> {
        self.iter += 1;
        let outer_ok = self.outer.step(mu, &self.b)?;
        let inner_ok = self.inner.step(nu, self.outer.x())?;
        Ok(outer_ok && inner_ok)
    }

    pub fn record(&self, wall_ns: u64) -> Result<TraceRecord> {
        let uvx = tprod(self.op.u(), self.inner.ax())?;
        let outer_raw = dist(self.outer.ax(), &self.b);
        let (rel_err, res_err, outer) = match &self.oracles {
            Some(o) => {
                let (rel, res) = o.inner.errors(self.inner.x(), &uvx);
                let (orel, ores) = o.outer.errors(self.outer.x(), self.outer.ax());
                (
                    Some(rel),
                    Some(res),
                    OuterRecord {
                        rel_err: Some(orel),
                        res_err: Some(ores),
                        raw_residual: outer_raw,
                    },
                )
            }
            None => (
                None,
                None,
                OuterRecord {
                    rel_err: None,
                    res_err: None,
                    raw_residual: outer_raw,
                },
            ),
        };
        Ok(TraceRecord {
            iter: self.iter,
            rel_err,
            res_err,
            raw_residual: dist(&uvx, &self.b),
            wall_ns,
            outer: Some(outer),
        })
    }

    pub fn run(mut self) -> Result<SolveOutput> {
        let clock = Clock::new(self.cfg.record_wall_time);
        let mut trace = ConvergenceTrace::new(self.label);
        let mut status = RunStatus::Completed;
        if self.iter == 0 {
            trace.push(self.record(clock.elapsed_ns())?)?;
        }
        while self.iter < self.cfg.max_iters {
            let mu = self.outer.blocks().sample(&mut self.rng);
            let nu = self.inner.blocks().sample(&mut self.rng);
            if !self.step_blocks(mu, nu)? {
                status = RunStatus::Diverged { iter: self.iter };
                break;
            }
            if self.cfg.records_at(self.iter) {
                let rec = self.record(clock.elapsed_ns())?;
                if trace.push(rec).is_err() {
                    status = RunStatus::Diverged { iter: self.iter };
                    break;
                }
            }
        }
        if let RunStatus::Diverged { iter } = status {
            log::warn!("{} iterates stopped being finite at iteration {iter}", self.label);
        }
        let FactorizedSolver { outer, inner, .. } = self;
        Ok(SolveOutput {
            x: inner.into_x(),
            z: Some(outer.into_x()),
            trace,
            status,
        })
    }
}

/// FacTRBGS from `Z = 0`, `X = 0` for `cfg.max_iters` iterations.
pub fn factrbgs(
    op: &FactorizedOperator,
    b: &Tensor3,
    t_u: &BlockSet,
    t_v: &BlockSet,
    cfg: &SolverConfig,
    oracle: Option<&FactorizedOracle>,
) -> Result<SolveOutput> {
    FactorizedSolver::factrbgs(op, b, t_u, t_v, cfg, oracle)?.run()
}

/// FacTRBAGS from `Z = 0`, `X = 0` with step sizes `cfg.omega1`, `cfg.omega2`.
pub fn factrbags(
    op: &FactorizedOperator,
    b: &Tensor3,
    t_u: &BlockSet,
    t_v: &BlockSet,
    cfg: &SolverConfig,
    oracle: Option<&FactorizedOracle>,
) -> Result<SolveOutput> {
    FactorizedSolver::factrbags(op, b, t_u, t_v, cfg, oracle)?.run()
}
