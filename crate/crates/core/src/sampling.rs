//! Column-block index sets and their sampling distributions.
//!
//! Indices are zero-based throughout the crate: a block set over `n`
//! columns draws its indices from `0..n`.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Generator used for every randomized routine. Deterministic for a given
/// seed within this implementation.
pub type SolverRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SolverRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A finite collection `T` of column blocks with a probability per block.
#[derive(Clone, Debug)]
pub struct BlockSet {
    n: usize,
    blocks: Vec<Vec<usize>>,
    weights: Vec<f64>,
    uniform: bool,
    sampler: Option<WeightedIndex<f64>>,
}

impl BlockSet {
    /// Validates blocks and weights. Every column must be covered by at
    /// least one block, otherwise `c_min` is zero and the rates are vacuous.
    pub fn new(n: usize, blocks: Vec<Vec<usize>>, weights: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidBlockSet("no columns".into()));
        }
        if blocks.is_empty() {
            return Err(Error::InvalidBlockSet("no blocks".into()));
        }
        if weights.len() != blocks.len() {
            return Err(Error::InvalidBlockSet(format!(
                "{} weights for {} blocks",
                weights.len(),
                blocks.len()
            )));
        }
        let mut seen = vec![false; n];
        for block in &blocks {
            crate::tensor::check_index_set(block, n)
                .map_err(|e| Error::InvalidBlockSet(e.to_string()))?;
            for &i in block {
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidBlockSet(format!(
                "column {i} is not covered by any block"
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidBlockSet("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidBlockSet(format!(
                "weights sum to {total}, not 1"
            )));
        }
        let uniform = weights.iter().all(|&w| w == weights[0]);
        let sampler = if uniform {
            None
        } else {
            Some(
                WeightedIndex::new(&weights)
                    .map_err(|e| Error::InvalidBlockSet(e.to_string()))?,
            )
        };
        Ok(BlockSet {
            n,
            blocks,
            weights,
            uniform,
            sampler,
        })
    }

    pub fn uniform(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let w = 1.0 / blocks.len().max(1) as f64;
        let weights = vec![w; blocks.len()];
        BlockSet::new(n, blocks, weights)
    }

    /// Contiguous partition `{0..s}, {s..2s}, ...`; the last block may be
    /// smaller. Uniform weights.
    pub fn partition(n: usize, s: usize) -> Result<Self> {
        if s == 0 || s > n {
            return Err(Error::InvalidBlockSet(format!(
                "block size {s} outside 1..={n}"
            )));
        }
        let blocks = (0..n)
            .step_by(s)
            .map(|start| (start..(start + s).min(n)).collect())
            .collect();
        BlockSet::uniform(n, blocks)
    }

    /// Cyclic sliding windows of `size` columns starting every `stride`
    /// columns. Overlapping windows give `c_min > 1`.
    pub fn sliding_window(n: usize, size: usize, stride: usize) -> Result<Self> {
        if size == 0 || size > n || stride == 0 || stride > size {
            return Err(Error::InvalidBlockSet(format!(
                "window {size} / stride {stride} invalid for {n} columns"
            )));
        }
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for start in (0..n).step_by(stride) {
            let mut b: Vec<usize> = (start..start + size).map(|i| i % n).collect();
            b.sort_unstable();
            if !blocks.contains(&b) {
                blocks.push(b);
            }
        }
        BlockSet::uniform(n, blocks)
    }

    /// The single block `[n]`.
    pub fn full(n: usize) -> Result<Self> {
        BlockSet::uniform(n, vec![(0..n).collect()])
    }

    pub fn columns(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, idx: usize) -> &[usize] {
        &self.blocks[idx]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Minimum number of blocks containing any single column.
    pub fn c_min(&self) -> usize {
        let mut counts = vec![0usize; self.n];
        for b in &self.blocks {
            for &i in b {
                counts[i] += 1;
            }
        }
        counts.into_iter().min().unwrap_or(0)
    }

    /// Draws a block index according to the weights.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.sampler {
            Some(s) => s.sample(rng),
            None if self.blocks.len() == 1 => 0,
            None => rng.random_range(0..self.blocks.len()),
        }
    }
}
