use crate::analysis::sigma_sq_blocks;
use crate::error::{Error, Result};
use crate::sampling::{seeded_rng, BlockSet, SolverRng};
use crate::solvers::stepper::{BlockStepper, Update};
use crate::solvers::{
    dist, warn_step_size, Clock, ConvergenceTrace, PlainOracle, RunStatus, SolveOutput,
    SolverConfig, TraceRecord,
};
use crate::tensor::Tensor3;

/// A TRBGS or TRBAGS run on `A * X = B`, advanced one iteration at a time.
#[derive(Clone, Debug)]
pub struct PlainSolver {
    stepper: BlockStepper,
    b: Tensor3,
    rng: SolverRng,
    oracle: Option<PlainOracle>,
    cfg: SolverConfig,
    label: &'static str,
    iter: usize,
}

impl PlainSolver {
    /// Randomized block Gauss-Seidel: every step projects the residual onto
    /// the column space of the sampled block. Blocks may carry any weights.
    pub fn trbgs(
        a: &Tensor3,
        b: &Tensor3,
        blocks: &BlockSet,
        cfg: &SolverConfig,
        x_star: Option<&Tensor3>,
    ) -> Result<Self> {
        Self::new(a, b, blocks, cfg, x_star, Update::Projection, "trbgs")
    }

    /// Randomized block averaged Gauss-Seidel: `X -= omega E_tau A_tau^* R`.
    /// Blocks must be sampled uniformly.
    pub fn trbags(
        a: &Tensor3,
        b: &Tensor3,
        blocks: &BlockSet,
        cfg: &SolverConfig,
        x_star: Option<&Tensor3>,
    ) -> Result<Self> {
        if !blocks.is_uniform() {
            return Err(Error::InvalidBlockSet(
                "the averaging solver samples blocks uniformly".into(),
            ));
        }
        let solver = Self::new(
            a,
            b,
            blocks,
            cfg,
            x_star,
            Update::Averaging { omega: cfg.omega },
            "trbags",
        )?;
        warn_step_size("omega", cfg.omega, sigma_sq_blocks(a, blocks)?);
        Ok(solver)
    }

    fn new(
        a: &Tensor3,
        b: &Tensor3,
        blocks: &BlockSet,
        cfg: &SolverConfig,
        x_star: Option<&Tensor3>,
        update: Update,
        label: &'static str,
    ) -> Result<Self> {
        cfg.validate()?;
        if a.rows() != b.rows() || a.depth() != b.depth() {
            return Err(Error::shape(
                label,
                format!("A is {:?}, B is {:?}", a.dims(), b.dims()),
            ));
        }
        if let Some(xs) = x_star {
            if xs.dims() != (a.cols(), b.cols(), a.depth()) {
                return Err(Error::shape(
                    label,
                    format!("oracle is {:?}, iterate is {}x{}x{}", xs.dims(), a.cols(), b.cols(), a.depth()),
                ));
            }
        }
        let stepper = BlockStepper::new(a, blocks, b.cols(), update, cfg.residual_mode)?;
        let oracle = x_star.map(|xs| PlainOracle::new(a, xs)).transpose()?;
        Ok(PlainSolver {
            stepper,
            b: b.clone(),
            rng: seeded_rng(cfg.seed),
            oracle,
            cfg: cfg.clone(),
            label,
            iter: 0,
        })
    }

    /// Iterations performed so far.
    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn x(&self) -> &Tensor3 {
        self.stepper.x()
    }

    /// Current `A X` as maintained by the residual mode.
    pub fn ax(&self) -> &Tensor3 {
        self.stepper.ax()
    }

    /// `A X - B`.
    pub fn residual(&self) -> Tensor3 {
        self.stepper.residual(&self.b)
    }

    /// Samples a block and applies one update. Returns the block index.
    pub fn step(&mut self) -> Result<usize> {
        let idx = self.stepper.blocks().sample(&mut self.rng);
        self.step_block(idx)?;
        Ok(idx)
    }

    /// Applies one update on a chosen block. Returns false when the iterate
    /// stopped being finite.
    pub fn step_block(&mut self, idx: usize) -> Result<bool> {
        self.iter += 1;
        self.stepper.step(idx, &self.b)
    }

    pub fn record(&self, wall_ns: u64) -> TraceRecord {
        let ax = self.stepper.ax();
        let (rel_err, res_err) = match &self.oracle {
            Some(o) => {
                let (rel, res) = o.errors(self.stepper.x(), ax);
                (Some(rel), Some(res))
            }
            None => (None, None),
        };
        TraceRecord {
            iter: self.iter,
            rel_err,
            res_err,
            raw_residual: dist(ax, &self.b),
            wall_ns,
            outer: None,
        }
    }

    /// Runs the remaining iterations up to `max_iters`.
    pub fn run(mut self) -> Result<SolveOutput> {
        let clock = Clock::new(self.cfg.record_wall_time);
        let mut trace = ConvergenceTrace::new(self.label);
        let mut status = RunStatus::Completed;
        if self.iter == 0 {
            trace.push(self.record(clock.elapsed_ns()))?;
        }
        while self.iter < self.cfg.max_iters {
            let idx = self.stepper.blocks().sample(&mut self.rng);
            if !self.step_block(idx)? {
                status = RunStatus::Diverged { iter: self.iter };
                break;
            }
            if self.cfg.records_at(self.iter) {
                let rec = self.record(clock.elapsed_ns());
                if trace.push(rec).is_err() {
                    status = RunStatus::Diverged { iter: self.iter };
                    break;
                }
            }
        }
        if let RunStatus::Diverged { iter } = status {
            log::warn!("{} iterates stopped being finite at iteration {iter}", self.label);
        }
        Ok(SolveOutput {
            x: self.stepper.into_x(),
            z: None,
            trace,
            status,
        })
    }
}

/// TRBGS from `X = 0` for `cfg.max_iters` iterations. With `x_star` the
/// trace carries errors against that reference solution.
pub fn trbgs(
    a: &Tensor3,
    b: &Tensor3,
    blocks: &BlockSet,
    cfg: &SolverConfig,
    x_star: Option<&Tensor3>,
) -> Result<SolveOutput> {
    PlainSolver::trbgs(a, b, blocks, cfg, x_star)?.run()
}

/// TRBAGS from `X = 0` with step size `cfg.omega`.
pub fn trbags(
    a: &Tensor3,
    b: &Tensor3,
    blocks: &BlockSet,
    cfg: &SolverConfig,
    x_star: Option<&Tensor3>,
) -> Result<SolveOutput> {
    PlainSolver::trbags(a, b, blocks, cfg, x_star)?.run()
}
