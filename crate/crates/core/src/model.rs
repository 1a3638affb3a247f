//! Block structure, priors, and weight containers.
//!
//! A signal of length `n` is split into `q` disjoint blocks; sparsity is
//! counted in blocks, and prior knowledge about which blocks are active comes
//! in two forms:
//!
//! * [`PriorModel1`] — a marginal activation probability `p_b` per block;
//! * [`PriorModel2`] — a partition of the block indices into `L` sets `P_i`,
//!   each with an expected accuracy `α_i` (the expected fraction of `P_i`
//!   that is active). Model-2 weights are tied per set: a weight vector is
//!   `w_b = λ_i` for `b ∈ P_i`, produced by [`expand_lambda`].
//!
//! All indices are zero-based. Types validate on construction and are
//! immutable afterwards, so they are freely shareable across threads.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Disjoint blocks covering `{0, .., n-1}`.
///
/// Blocks are stored as explicit index lists rather than ranges so that
/// row-blocks of a multi-snapshot matrix (and any other non-contiguous
/// grouping) can reuse the same machinery; [`validate_partition`] builds the
/// common contiguous layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl BlockPartition {
    /// Builds a partition from explicit index sets, validating that they are
    /// nonempty, in range, pairwise disjoint, and cover `{0, .., n-1}`.
    pub fn from_blocks(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 || blocks.is_empty() {
            return Err(Error::InvalidPartition(
                "need n ≥ 1 and at least one block".into(),
            ));
        }
        let mut seen = vec![false; n];
        let mut covered = 0usize;
        for (b, idx) in blocks.iter().enumerate() {
            if idx.is_empty() {
                return Err(Error::InvalidPartition(format!("block {b} is empty")));
            }
            for &i in idx {
                if i >= n {
                    return Err(Error::InvalidPartition(format!(
                        "block {b} contains index {i} ≥ n = {n}"
                    )));
                }
                if seen[i] {
                    return Err(Error::InvalidPartition(format!(
                        "index {i} appears in more than one block"
                    )));
                }
                seen[i] = true;
                covered += 1;
            }
        }
        if covered != n {
            return Err(Error::InvalidPartition(format!(
                "blocks cover {covered} of {n} coordinates"
            )));
        }
        Ok(Self { n, blocks })
    }

    /// Contiguous partition with the given block sizes; `q` blocks of sizes
    /// `sizes[b]` laid out back to back.
    pub fn contiguous(n: usize, sizes: &[usize]) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(Error::InvalidPartition("every block size must be ≥ 1".into()));
        }
        let total: usize = sizes.iter().sum();
        if total != n {
            return Err(Error::InvalidPartition(format!(
                "block sizes sum to {total}, expected n = {n}"
            )));
        }
        let mut blocks = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &k in sizes {
            blocks.push((start..start + k).collect());
            start += k;
        }
        Self::from_blocks(n, blocks)
    }

    /// Total coordinate count `n`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of blocks `q`.
    pub fn q(&self) -> usize {
        self.blocks.len()
    }

    /// Indices of block `b`.
    pub fn block(&self, b: usize) -> &[usize] {
        &self.blocks[b]
    }

    /// All blocks, in order.
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Size `k_b` of block `b`.
    pub fn block_size(&self, b: usize) -> usize {
        self.blocks[b].len()
    }

    /// The common block size if all blocks are equal-sized, else `None`.
    pub fn uniform_block_size(&self) -> Option<usize> {
        let k = self.blocks[0].len();
        self.blocks.iter().all(|blk| blk.len() == k).then_some(k)
    }
}

/// Contiguous-block constructor: `q = sizes.len()` blocks laid out in order,
/// with sizes summing to `n`.
pub fn validate_partition(n: usize, block_sizes: &[usize]) -> Result<BlockPartition> {
    BlockPartition::contiguous(n, block_sizes)
}

/// Per-block activation probabilities, strictly inside `(0, 1)`.
///
/// Boundary values are rejected: the optimal-weight equation degenerates
/// there (the weight tends to `∞` as `p → 0` and to `0` as `p → 1`).
/// Callers holding boundary estimates should clamp, e.g. with
/// [`PriorModel1::clamped`], which uses margin `1e-6`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel1<R: Real> {
    p: Vec<R>,
}

/// Clamping margin used by [`PriorModel1::clamped`].
pub const PROBABILITY_MARGIN: f64 = 1e-6;

impl<R: Real> PriorModel1<R> {
    /// Validates `0 < p_b < 1` for every block.
    pub fn new(p: Vec<R>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidPrior("empty probability vector".into()));
        }
        for (b, &pb) in p.iter().enumerate() {
            if !(pb > R::zero() && pb < R::one()) {
                return Err(Error::InvalidPrior(format!(
                    "p[{b}] = {pb} outside the open interval (0, 1); \
                     clamp boundary estimates (see PriorModel1::clamped)"
                )));
            }
        }
        Ok(Self { p })
    }

    /// Builds a prior after clamping every entry into
    /// `[PROBABILITY_MARGIN, 1 - PROBABILITY_MARGIN]`. NaN is still rejected.
    pub fn clamped(p: Vec<R>) -> Result<Self> {
        let eps = R::of(PROBABILITY_MARGIN);
        let clamped: Vec<R> = p
            .into_iter()
            .map(|x| x.max(eps).min(R::one() - eps))
            .collect();
        Self::new(clamped)
    }

    /// Number of blocks described.
    pub fn q(&self) -> usize {
        self.p.len()
    }

    /// Probability for block `b`.
    pub fn p(&self, b: usize) -> R {
        self.p[b]
    }

    /// All probabilities.
    pub fn probabilities(&self) -> &[R] {
        &self.p
    }
}

/// Set-structured prior: `L` disjoint sets of block indices with expected
/// accuracies `α_i ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel2<R: Real> {
    q: usize,
    sets: Vec<Vec<usize>>,
    alphas: Vec<R>,
}

impl<R: Real> PriorModel2<R> {
    /// Validates disjointness and coverage of `{0, .., q-1}`.
    ///
    /// If the given sets do not cover all block indices, the remainder forms
    /// an implicit complement set — but its accuracy must be supplied in
    /// `complement_alpha`; there is no silent default because every set needs
    /// an `α` for weight solving. Passing `complement_alpha` when coverage is
    /// already complete is rejected as a likely configuration slip.
    pub fn new(
        q: usize,
        sets: Vec<Vec<usize>>,
        alphas: Vec<R>,
        complement_alpha: Option<R>,
    ) -> Result<Self> {
        if q == 0 || sets.is_empty() {
            return Err(Error::InvalidPrior("need q ≥ 1 and at least one set".into()));
        }
        if sets.len() != alphas.len() {
            return Err(Error::InvalidPrior(format!(
                "{} sets but {} accuracies",
                sets.len(),
                alphas.len()
            )));
        }
        let mut owner = vec![usize::MAX; q];
        for (i, set) in sets.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidPrior(format!("set {i} is empty")));
            }
            for &b in set {
                if b >= q {
                    return Err(Error::InvalidPrior(format!(
                        "set {i} contains block index {b} ≥ q = {q}"
                    )));
                }
                if owner[b] != usize::MAX {
                    return Err(Error::InvalidPrior(format!(
                        "block {b} belongs to sets {} and {i}",
                        owner[b]
                    )));
                }
                owner[b] = i;
            }
        }
        let mut sets = sets;
        let mut alphas = alphas;
        let uncovered: Vec<usize> = (0..q).filter(|&b| owner[b] == usize::MAX).collect();
        match (uncovered.is_empty(), complement_alpha) {
            (true, None) => {}
            (true, Some(_)) => {
                return Err(Error::InvalidPrior(
                    "complement accuracy given, but the sets already cover every block".into(),
                ));
            }
            (false, Some(alpha)) => {
                sets.push(uncovered);
                alphas.push(alpha);
            }
            (false, None) => {
                return Err(Error::InvalidPrior(format!(
                    "{} block indices are not covered by any set; supply an accuracy \
                     for the implicit complement set",
                    uncovered.len()
                )));
            }
        }
        for (i, &a) in alphas.iter().enumerate() {
            if !(a >= R::zero() && a <= R::one()) {
                return Err(Error::InvalidPrior(format!(
                    "alpha[{i}] = {a} outside [0, 1]"
                )));
            }
        }
        Ok(Self { q, sets, alphas })
    }

    /// Number of block indices covered (`q` of the underlying partition).
    pub fn q(&self) -> usize {
        self.q
    }

    /// Number of sets `L` (after any complement completion).
    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    /// The block indices of set `i`.
    pub fn set(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    /// All sets.
    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// Accuracy of set `i`.
    pub fn alpha(&self, i: usize) -> R {
        self.alphas[i]
    }

    /// All accuracies.
    pub fn alphas(&self) -> &[R] {
        &self.alphas
    }
}

/// Positive per-block weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<R: Real> {
    w: Vec<R>,
}

impl<R: Real> WeightVector<R> {
    /// Validates strict positivity and finiteness.
    pub fn new(w: Vec<R>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        for (b, &wb) in w.iter().enumerate() {
            if !(wb > R::zero() && wb.is_finite()) {
                return Err(Error::InvalidWeights(format!(
                    "w[{b}] = {wb} is not a positive finite weight"
                )));
            }
        }
        Ok(Self { w })
    }

    /// All-ones weights for `q` blocks (the unweighted program).
    pub fn uniform(q: usize) -> Self {
        Self {
            w: vec![R::one(); q],
        }
    }

    /// Number of blocks weighted.
    pub fn q(&self) -> usize {
        self.w.len()
    }

    /// Weight of block `b`.
    pub fn get(&self, b: usize) -> R {
        self.w[b]
    }

    /// Weights as a slice.
    pub fn as_slice(&self) -> &[R] {
        &self.w
    }
}

/// Positive per-set weights for Model 2; expanded to per-block weights by
/// [`expand_lambda`].
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaVector<R: Real> {
    lambda: Vec<R>,
}

impl<R: Real> LambdaVector<R> {
    /// Validates strict positivity and finiteness.
    pub fn new(lambda: Vec<R>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::InvalidWeights("empty lambda vector".into()));
        }
        for (i, &l) in lambda.iter().enumerate() {
            if !(l > R::zero() && l.is_finite()) {
                return Err(Error::InvalidWeights(format!(
                    "lambda[{i}] = {l} is not a positive finite weight"
                )));
            }
        }
        Ok(Self { lambda })
    }

    /// Number of sets weighted.
    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    /// True when there are no entries (unreachable through `new`).
    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// Weight of set `i`.
    pub fn get(&self, i: usize) -> R {
        self.lambda[i]
    }

    /// Weights as a slice.
    pub fn as_slice(&self) -> &[R] {
        &self.lambda
    }
}

/// Expands per-set weights into per-block weights: `w_b = λ_i` for the
/// unique set `i` containing `b`.
pub fn expand_lambda<R: Real>(
    partition: &BlockPartition,
    prior: &PriorModel2<R>,
    lambda: &LambdaVector<R>,
) -> Result<WeightVector<R>> {
    if prior.q() != partition.q() {
        return Err(Error::DimensionMismatch(format!(
            "prior covers {} blocks, partition has {}",
            prior.q(),
            partition.q()
        )));
    }
    if lambda.len() != prior.num_sets() {
        return Err(Error::DimensionMismatch(format!(
            "{} lambda entries for {} sets",
            lambda.len(),
            prior.num_sets()
        )));
    }
    let mut w = vec![R::zero(); prior.q()];
    for (i, set) in prior.sets().iter().enumerate() {
        for &b in set {
            w[b] = lambda.get(i);
        }
    }
    WeightVector::new(w)
}
