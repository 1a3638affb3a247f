//! Optimal, heuristic, and robustness-related weight computation.
//!
//! For a block of size `k` with activation probability `p`, the weight that
//! minimizes the expected sample-complexity bound solves
//!
//! ```text
//! (p / (1-p)) · w  =  ψ(w, k) / N_k ,     N_k = 2^(k/2-1) Γ(k/2),
//! ```
//!
//! whose left side rises linearly from zero and whose right side falls
//! strictly from the chi-`k` mean to zero — so the root exists, is unique,
//! and brackets cheaply. [`solve_model1`] applies the scalar solve per block;
//! [`solve_model2`] applies it per set accuracy `α_i` (same equation with
//! `α` in place of `p`) with documented handling of the degenerate
//! accuracies 0 and 1.
//!
//! [`robustness_constant`] evaluates the sensitivity constant `c(k,p)` that
//! is meant to bound `|w*(p) - w*(p')| / |p - p'|` for nearby priors; the
//! experiment harness measures how well it does (see
//! `harness::run_robustness_table`).

use crate::error::{Error, Result};
use crate::model::{LambdaVector, PriorModel1, PriorModel2, WeightVector};
use crate::scalar::Real;
use crate::solve1d::brent;
use crate::specfun::{chi_mean, normalized_psi, regularized_gamma_q};
use rayon::prelude::*;

/// Block count from which batch solves fan out across the thread pool.
const PARALLEL_THRESHOLD: usize = 64;

/// Tuning for the scalar weight solver.
#[derive(Debug, Clone)]
pub struct WeightSolverConfig<R: Real> {
    /// Absolute tolerance on the weight-equation residual (and on the root
    /// bracket). Default `1e-12`.
    pub root_tol: R,
    /// Bracket expansion limit: the upper end starts at the chi-`k` mean and
    /// doubles at most this many times. Default 60 (reaches ~10^18·chi_mean,
    /// far past any representable root).
    pub max_bracket_doublings: u32,
    /// Iteration cap for the bracketed root refinement. Default 200.
    pub max_iters: usize,
    /// A set with accuracy exactly 0 gets weight `cap_factor · max(finite
    /// solved λ)` instead of the infinite weight the equation dictates;
    /// a large finite weight keeps the downstream convex program well posed.
    /// Default 10.
    pub lambda_cap_factor: R,
    /// A set with accuracy exactly 1 gets this weight instead of 0, keeping
    /// the weighted block norm a norm. Default `1e-8`.
    pub lambda_min: R,
}

impl<R: Real> Default for WeightSolverConfig<R> {
    fn default() -> Self {
        Self {
            root_tol: R::of(1e-12),
            max_bracket_doublings: 60,
            max_iters: 200,
            lambda_cap_factor: R::of(10.0),
            lambda_min: R::of(1e-8),
        }
    }
}

/// Solves the scalar optimal-weight equation for one block.
///
/// Returns the unique `w* ≥ 0` with `(p/(1-p))·w* = ψ(w*,k)/N_k`, to residual
/// at most `cfg.root_tol`.
pub fn solve_weight_scalar<R: Real>(p: R, k: usize, cfg: &WeightSolverConfig<R>) -> Result<R> {
    if !(p > R::zero() && p < R::one()) {
        return Err(Error::InvalidPrior(format!(
            "probability must lie strictly inside (0,1), got {p}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("block size k must be ≥ 1".into()));
    }
    let slope = p / (R::one() - p);
    let residual = |w: R| slope * w - normalized_psi(w, k);

    // g(0) = -chi_mean(k) < 0; expand the upper end from the chi mean until
    // the residual turns positive. Since the right-hand side is strictly
    // decreasing to zero, this succeeds after O(log(1/slope)) doublings.
    let g0 = -chi_mean::<R>(k);
    let mut hi = chi_mean::<R>(k);
    let mut ghi = residual(hi);
    let mut doublings = 0;
    while ghi <= R::zero() {
        if doublings >= cfg.max_bracket_doublings {
            return Err(Error::BracketFailure(format!(
                "no sign change up to w = {hi} after {doublings} doublings (p = {p}, k = {k})"
            )));
        }
        hi = hi + hi;
        ghi = residual(hi);
        doublings += 1;
    }

    // Scale the bracket tolerance by the residual slope so the *residual*
    // meets root_tol even for priors clamped very close to 1, where the
    // linear term is steep and the root is tiny.
    let xtol = cfg.root_tol / (R::one() + slope);
    let w = brent(residual, R::zero(), hi, g0, ghi, xtol, cfg.max_iters);
    let w = w.max(R::zero());
    debug_assert!(
        residual(w).abs() <= cfg.root_tol + R::of(64.0) * R::epsilon() * (R::one() + slope),
        "weight residual exceeded tolerance"
    );
    Ok(w)
}

/// Per-block optimal weights for a Model-1 prior: `w*_b` solves the scalar
/// equation with `(p_b, k_b)`. Blocks are independent; large batches solve
/// in parallel.
pub fn solve_model1<R: Real>(
    prior: &PriorModel1<R>,
    partition: &crate::model::BlockPartition,
    cfg: &WeightSolverConfig<R>,
) -> Result<WeightVector<R>> {
    if prior.q() != partition.q() {
        return Err(Error::DimensionMismatch(format!(
            "prior has {} blocks, partition has {}",
            prior.q(),
            partition.q()
        )));
    }
    let solve_all = |ps: &[R]| -> Result<Vec<R>> {
        if ps.len() >= PARALLEL_THRESHOLD {
            (0..ps.len())
                .into_par_iter()
                .map(|b| solve_weight_scalar(ps[b], partition.block_size(b), cfg))
                .collect()
        } else {
            (0..ps.len())
                .map(|b| solve_weight_scalar(ps[b], partition.block_size(b), cfg))
                .collect()
        }
    };
    WeightVector::new(solve_all(prior.probabilities())?)
}

/// Per-set optimal weights for a Model-2 prior over equal-size-`k` blocks.
///
/// Interior accuracies solve the scalar equation; `α = 0` is capped at
/// `cfg.lambda_cap_factor` times the largest finite solved weight (an
/// effectively-excluding but well-posed penalty), and `α = 1` is floored at
/// `cfg.lambda_min`.
pub fn solve_model2<R: Real>(
    prior: &PriorModel2<R>,
    k: usize,
    cfg: &WeightSolverConfig<R>,
) -> Result<LambdaVector<R>> {
    let mut lambdas = vec![R::zero(); prior.num_sets()];
    let mut max_finite = R::zero();
    for (i, slot) in lambdas.iter_mut().enumerate() {
        let a = prior.alpha(i);
        if a > R::zero() && a < R::one() {
            let l = solve_weight_scalar(a, k, cfg)?;
            max_finite = max_finite.max(l);
            *slot = l;
        }
    }
    // Degenerate accuracies, resolved relative to the finite solutions. If
    // every set is degenerate, fall back to the chi mean as the scale anchor
    // (the natural size of a solved weight at moderate accuracy).
    let cap_base = if max_finite > R::zero() {
        max_finite
    } else {
        chi_mean::<R>(k)
    };
    for (i, slot) in lambdas.iter_mut().enumerate() {
        let a = prior.alpha(i);
        if a == R::zero() {
            *slot = cfg.lambda_cap_factor * cap_base;
        } else if a == R::one() {
            *slot = cfg.lambda_min;
        }
    }
    LambdaVector::new(lambdas)
}

/// Heuristic Model-1 weights `w_b = 1/(p_b + ε)`.
pub fn heuristic_weights<R: Real>(prior: &PriorModel1<R>, eps: R) -> Result<WeightVector<R>> {
    if !(eps > R::zero()) {
        return Err(Error::InvalidArgument(format!(
            "heuristic offset must be positive, got {eps}"
        )));
    }
    WeightVector::new(
        prior
            .probabilities()
            .iter()
            .map(|&p| R::one() / (p + eps))
            .collect(),
    )
}

/// Heuristic Model-2 weights `λ_i = 1/(α_i + ε)`; well defined for the
/// boundary accuracies too.
pub fn heuristic_lambda<R: Real>(prior: &PriorModel2<R>, eps: R) -> Result<LambdaVector<R>> {
    if !(eps > R::zero()) {
        return Err(Error::InvalidArgument(format!(
            "heuristic offset must be positive, got {eps}"
        )));
    }
    LambdaVector::new(
        prior
            .alphas()
            .iter()
            .map(|&a| R::one() / (a + eps))
            .collect(),
    )
}

/// Sensitivity constant `c(k, p)` for the optimal weight as a function of
/// the prior.
///
/// With `h = w*(p, k)` and the upper incomplete gamma `γ(a, z) = ∫_z^∞
/// u^(a-1) e^(-u) du` evaluated at `a = k/2`, `z = h²/2`:
///
/// ```text
/// c(k,p) = ( √2·h·(Γ(k/2) - γ) + 2γ )² / ( 2√2 · Γ(k/2) · γ )
/// ```
///
/// computed here through regularized gammas (`P = 1 - Q` at the same point)
/// so no Γ factor can overflow:
/// `c = (√2·h·P + 2Q)² / (2√2·Q)`.
///
/// Errors with [`Error::Overflow`] when the regularized tail `Q` underflows
/// (prior so small that the weight is enormous), where the constant is no
/// longer representable.
pub fn robustness_constant<R: Real>(k: usize, p: R) -> Result<R> {
    let cfg = WeightSolverConfig::default();
    let h = solve_weight_scalar(p, k, &cfg)?;
    let half = R::of(0.5);
    let q = regularized_gamma_q(half * R::of_usize(k), half * h * h);
    if !(q > R::zero()) || !q.is_finite() {
        return Err(Error::Overflow(format!(
            "regularized gamma tail underflowed at k = {k}, p = {p} (w* = {h})"
        )));
    }
    let pr = R::one() - q;
    let sqrt2 = R::SQRT_2();
    let num = sqrt2 * h * pr + R::of(2.0) * q;
    Ok(num * num / (R::of(2.0) * sqrt2 * q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_partition;
    use approx::assert_relative_eq;

    // Roots and constants frozen from a 50-digit solve of the weight
    // equation (mpmath, Anderson iteration on the bracketed interval).
    const W_05_K1: f64 = 0.436_326_563_793_651_588_76;
    const W_02_K5: f64 = 1.813_472_519_710_821_075;
    const W_09_K3: f64 = 0.159_581_202_342_361_267_13;
    const W_01_K3: f64 = 1.771_449_330_951_793_617_8;
    const W_05_K20: f64 = 2.208_317_299_461_331_177_6;
    const C_1_05: f64 = 1.254_619_478_943_293_815_4;
    const C_5_02: f64 = 2.597_132_819_421_011_123_1;
    const C_10_08: f64 = 1.414_213_242_256_992_269_4;

    fn cfg() -> WeightSolverConfig<f64> {
        WeightSolverConfig::default()
    }

    #[test]
    fn frozen_roots() {
        for (p, k, want) in [
            (0.5, 1, W_05_K1),
            (0.2, 5, W_02_K5),
            (0.9, 3, W_09_K3),
            (0.1, 3, W_01_K3),
            (0.5, 20, W_05_K20),
        ] {
            let w = solve_weight_scalar(p, k, &cfg()).unwrap();
            assert_relative_eq!(w, want, max_relative = 1e-11);
        }
    }

    #[test]
    fn residuals_meet_tolerance() {
        for &p in &[0.01, 0.1, 0.5, 0.9, 0.99, 1.0 - 1e-6] {
            for &k in &[1usize, 2, 5, 10, 50] {
                let w = solve_weight_scalar(p, k, &cfg()).unwrap();
                let res = (p / (1.0 - p)) * w - normalized_psi(w, k);
                assert!(
                    res.abs() <= 1e-10,
                    "residual {res:.3e} too large at p={p}, k={k}"
                );
            }
        }
    }

    #[test]
    fn weight_vanishes_as_p_approaches_one() {
        let w = solve_weight_scalar(1.0 - 1e-6, 4, &cfg()).unwrap();
        assert!(w > 0.0 && w < 1e-5);
    }

    #[test]
    fn domain_validation() {
        assert!(solve_weight_scalar(0.0, 3, &cfg()).is_err());
        assert!(solve_weight_scalar(1.0, 3, &cfg()).is_err());
        assert!(solve_weight_scalar(0.5, 0, &cfg()).is_err());
    }

    #[test]
    fn residual_has_single_sign_change() {
        // Uniqueness: on a fine grid over [0, 4w*+10] the residual changes
        // sign exactly once.
        for (p, k) in [(0.3, 2usize), (0.7, 6), (0.12, 9)] {
            let w = solve_weight_scalar(p, k, &cfg()).unwrap();
            let g = |x: f64| (p / (1.0 - p)) * x - normalized_psi(x, k);
            let top = 4.0 * w + 10.0;
            let steps = 20_000;
            let mut changes = 0;
            let mut prev = g(0.0);
            for i in 1..=steps {
                let x = top * i as f64 / steps as f64;
                let cur = g(x);
                if prev.signum() != cur.signum() {
                    changes += 1;
                }
                prev = cur;
            }
            assert_eq!(changes, 1, "expected one sign change for p={p}, k={k}");
        }
    }

    #[test]
    fn monotone_in_p_and_k() {
        for &k in &[1usize, 3, 8] {
            let mut prev = f64::INFINITY;
            for i in 1..=19 {
                let p = 0.05 * i as f64;
                let w = solve_weight_scalar(p, k, &cfg()).unwrap();
                assert!(w < prev, "w*(p) must strictly decrease (k={k}, p={p})");
                prev = w;
            }
        }
        for &p in &[0.2, 0.5, 0.8] {
            let mut prev = 0.0;
            for k in 1..=15 {
                let w = solve_weight_scalar(p, k, &cfg()).unwrap();
                assert!(w > prev, "w*(k) must strictly increase (p={p}, k={k})");
                prev = w;
            }
        }
    }

    #[test]
    fn model1_batch_matches_scalar_and_symmetry() {
        let part = validate_partition(12, &[3, 3, 3, 3]).unwrap();
        let prior = PriorModel1::new(vec![0.4, 0.4, 0.4, 0.4]).unwrap();
        let w = solve_model1(&prior, &part, &cfg()).unwrap();
        let w0 = w.get(0);
        assert!(w.as_slice().iter().all(|&x| (x - w0).abs() < 1e-14));

        let prior2 = PriorModel1::new(vec![0.9, 0.1, 0.9, 0.1]).unwrap();
        let w2 = solve_model1(&prior2, &part, &cfg()).unwrap();
        assert!(w2.get(0) < w2.get(1), "likelier blocks get smaller weights");
        assert_relative_eq!(
            w2.get(1),
            solve_weight_scalar(0.1, 3, &cfg()).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn model2_degenerate_accuracies() {
        let prior = PriorModel2::new(
            6,
            vec![vec![0, 1], vec![2, 3], vec![4, 5]],
            vec![0.8_f64, 2.0 / 3.0, 0.0],
            None,
        )
        .unwrap();
        let lam = solve_model2(&prior, 10, &cfg()).unwrap();
        assert!(lam.get(0) < lam.get(1), "higher accuracy, smaller weight");
        assert_relative_eq!(lam.get(2), 10.0 * lam.get(1), max_relative = 1e-12);

        let ones = PriorModel2::new(2, vec![vec![0], vec![1]], vec![1.0_f64, 0.5], None).unwrap();
        let lam1 = solve_model2(&ones, 4, &cfg()).unwrap();
        assert_eq!(lam1.get(0), 1e-8);

        // Equal accuracies give equal weights; interior case reduces to the
        // scalar solver.
        let eq = PriorModel2::new(2, vec![vec![0], vec![1]], vec![0.5_f64, 0.5], None).unwrap();
        let leq = solve_model2(&eq, 1, &cfg()).unwrap();
        assert_eq!(leq.get(0), leq.get(1));
        assert_relative_eq!(
            leq.get(0),
            solve_weight_scalar(0.5, 1, &cfg()).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn heuristic_arithmetic() {
        let prior = PriorModel1::new(vec![0.5_f64]).unwrap();
        assert_eq!(heuristic_weights(&prior, 0.5).unwrap().as_slice(), &[1.0]);
        let prior2 = PriorModel1::new(vec![0.9_f64, 0.1]).unwrap();
        let w = heuristic_weights(&prior2, 0.1).unwrap();
        assert_relative_eq!(w.get(0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(w.get(1), 5.0, epsilon = 1e-12);
        let m2 = PriorModel2::new(2, vec![vec![0], vec![1]], vec![0.0_f64, 0.5], None).unwrap();
        let lam = heuristic_lambda(&m2, 0.01).unwrap();
        assert_relative_eq!(lam.get(0), 100.0, epsilon = 1e-12);
        assert!(heuristic_weights(&prior, 0.0).is_err());
    }

    #[test]
    fn robustness_constant_frozen_values() {
        assert_relative_eq!(robustness_constant(1, 0.5).unwrap(), C_1_05, max_relative = 1e-10);
        assert_relative_eq!(robustness_constant(5, 0.2).unwrap(), C_5_02, max_relative = 1e-10);
        assert_relative_eq!(robustness_constant(10, 0.8).unwrap(), C_10_08, max_relative = 1e-10);
    }

    #[test]
    fn robustness_constant_positive_and_divergent_at_small_p() {
        for &k in &[1usize, 5, 10] {
            for i in 1..=18 {
                let p = 0.05 * i as f64;
                let c = robustness_constant(k, p).unwrap();
                assert!(c > 0.0 && c.is_finite());
            }
            // Small priors force enormous constants (weight blow-up).
            let c_tiny = robustness_constant(k, 0.001).unwrap();
            let c_mid = robustness_constant(k, 0.5).unwrap();
            assert!(c_tiny > 100.0 * c_mid);
        }
    }
}
