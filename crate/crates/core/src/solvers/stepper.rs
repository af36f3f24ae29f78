use crate::error::{Error, Result};
use crate::oracle::BlockPinv;
use crate::sampling::BlockSet;
use crate::solvers::ResidualMode;
use crate::tensor::{tprod, tprod_acc, Matrix, Tensor3};

/// Number of `f64` entries the stepper may spend on explicit block-circulant
/// matrices. Larger problems fall back to slice-wise t-products.
pub(crate) const DENSE_BUDGET: usize = 1 << 24;

/// Block update rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Update {
    /// `X -= E_tau (A_tau^* A_tau)^{-1} A_tau^* R`.
    Projection,
    /// `X -= omega E_tau A_tau^* R`.
    Averaging { omega: f64 },
}

#[derive(Clone, Debug)]
enum Left {
    Pinv(BlockPinv),
    Adjoint(Tensor3),
}

/// Matricized form of one block: `left` maps `unfold(R)` to `unfold(delta)`
/// and `block` is `bcirc(A_tau)`.
#[derive(Clone, Debug)]
struct DenseBlock {
    left: Matrix,
    block: Matrix,
}

#[derive(Clone, Debug)]
struct BlockOp {
    block: Tensor3,
    left: Left,
    dense: Option<DenseBlock>,
}

/// Iterate `X` for one operator together with `A X`, advanced one block at
/// a time against a target that may change between steps.
#[derive(Clone, Debug)]
pub(crate) struct BlockStepper {
    op: Tensor3,
    op_dense: Option<Matrix>,
    blocks: BlockSet,
    ops: Vec<BlockOp>,
    step: f64,
    mode: ResidualMode,
    x: Tensor3,
    ax: Tensor3,
}

fn dense_cost(op: &Tensor3, blocks: &BlockSet, mode: ResidualMode) -> usize {
    let (m, n, p) = op.dims();
    let per_col = 2 * m * p * p;
    let blocks_cost: usize = blocks.blocks().iter().map(|t| t.len() * per_col).sum();
    match mode {
        ResidualMode::Recompute => blocks_cost + m * n * p * p,
        ResidualMode::Incremental => blocks_cost,
    }
}

impl BlockStepper {
    /// Precomputes per-block data for every block of `blocks`: the cached
    /// normal-equation solver for projections, or the block and its adjoint
    /// for averaging. When the block-circulant matrices fit in
    /// [`DENSE_BUDGET`] they are formed explicitly so that each step is a
    /// pair of matrix products.
    pub(crate) fn new(
        op: &Tensor3,
        blocks: &BlockSet,
        l: usize,
        update: Update,
        mode: ResidualMode,
    ) -> Result<Self> {
        if blocks.columns() != op.cols() {
            return Err(Error::InvalidBlockSet(format!(
                "block set covers {} columns, operator has {}",
                blocks.columns(),
                op.cols()
            )));
        }
        let dense = dense_cost(op, blocks, mode) <= DENSE_BUDGET;
        let mut ops = Vec::with_capacity(blocks.len());
        for tau in blocks.blocks() {
            let block = op.column_block(tau)?;
            let left = match update {
                Update::Projection => Left::Pinv(BlockPinv::with_label(block.clone(), tau.clone())?),
                Update::Averaging { .. } => Left::Adjoint(block.conj_transpose()),
            };
            let dense = dense.then(|| {
                let bc = block.bcirc();
                let left = match &left {
                    Left::Pinv(p) => p.matrix(),
                    Left::Adjoint(_) => bc.transpose(),
                };
                DenseBlock { left, block: bc }
            });
            ops.push(BlockOp { block, left, dense });
        }
        let step = match update {
            Update::Projection => 1.0,
            Update::Averaging { omega } => omega,
        };
        let op_dense = (dense && mode == ResidualMode::Recompute).then(|| op.bcirc());
        let (m, n, p) = op.dims();
        Ok(BlockStepper {
            op: op.clone(),
            op_dense,
            blocks: blocks.clone(),
            ops,
            step,
            mode,
            x: Tensor3::zeros(n, l, p),
            ax: Tensor3::zeros(m, l, p),
        })
    }

    pub(crate) fn blocks(&self) -> &BlockSet {
        &self.blocks
    }

    pub(crate) fn x(&self) -> &Tensor3 {
        &self.x
    }

    pub(crate) fn into_x(self) -> Tensor3 {
        self.x
    }

    /// Current `A X`.
    pub(crate) fn ax(&self) -> &Tensor3 {
        &self.ax
    }

    /// `A X - target`.
    pub(crate) fn residual(&self, target: &Tensor3) -> Tensor3 {
        let mut r = self.ax.clone();
        r.axpy(-1.0, target).expect("target matches A X");
        r
    }

    /// One update on block `idx` against `target`. Returns false when the
    /// iterate is no longer finite.
    pub(crate) fn step(&mut self, idx: usize, target: &Tensor3) -> Result<bool> {
        let p = self.op.depth();
        let alpha = -self.step;
        let op = &self.ops[idx];
        let r = self.residual(target);
        match &op.dense {
            Some(d) => {
                let delta_m = &d.left * r.unfold();
                let delta = Tensor3::fold(&delta_m, p)?;
                self.x.scatter_add_rows(self.blocks.block(idx), alpha, &delta)?;
                match &self.op_dense {
                    Some(full) => self.ax = Tensor3::fold(&(full * self.x.unfold()), p)?,
                    None => {
                        let upd = Tensor3::fold(&(&d.block * delta_m), p)?;
                        self.ax.axpy(alpha, &upd)?;
                    }
                }
            }
            None => {
                let delta = match &op.left {
                    Left::Pinv(pinv) => pinv.apply(&r)?,
                    Left::Adjoint(adjoint) => tprod(adjoint, &r)?,
                };
                self.x.scatter_add_rows(self.blocks.block(idx), alpha, &delta)?;
                match self.mode {
                    ResidualMode::Recompute => self.ax = tprod(&self.op, &self.x)?,
                    ResidualMode::Incremental => {
                        tprod_acc(alpha, &op.block, &delta, &mut self.ax)
                    }
                }
            }
        }
        Ok(self.x.is_finite() && self.ax.is_finite())
    }

    /// Drops the matricized data so every step uses slice-wise t-products.
    #[cfg(test)]
    pub(crate) fn without_dense(mut self) -> Self {
        self.op_dense = None;
        for op in &mut self.ops {
            op.dense = None;
        }
        self
    }
}
