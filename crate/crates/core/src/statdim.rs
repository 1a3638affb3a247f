//! Statistical-dimension bounds for the descent cone of the weighted block
//! norm, and a Monte-Carlo estimator to sanity-check them.
//!
//! For a support set `B` and weights `w`, the bound is
//!
//! ```text
//! δ(B, w) ≤ inf_{t ≥ 0} [ Σ_{b∈B} (k_b + t²w_b²) + Σ_{b∉B} φ_B(t·w_b, k_b)/N_{k_b} ] ,
//! ```
//!
//! a strictly convex function of `t` whenever `B` is nonempty (its second
//! derivative is at least `2Σ_{b∈B} w_b²`), so the minimizer is the unique
//! root of
//!
//! ```text
//! f'(t)/2 = t·Σ_{b∈B} w_b² − Σ_{b∉B} w_b·ψ(t·w_b, k_b)/N_{k_b} ,
//! ```
//!
//! which is nondecreasing, negative at `t = 0`, and found by bisection after
//! doubling out an upper bracket. [`expected_bound_model1`] and
//! [`expected_bound_model2`] average the same objective over the prior
//! *before* minimizing (the exchange `E inf ≤ inf E` makes these upper
//! bounds on the expected statistical dimension), which is what sample-
//! complexity predictions and the weight-optimality comparisons consume.
//!
//! [`empirical_statdim`] estimates the true expected distance
//! `E‖g − Π_cone(g)‖²` by sampling standard Gaussians and solving the inner
//! one-dimensional projection problem per sample; the spread between it and
//! the analytic bound is the Jensen gap.

use crate::error::{Error, Result};
use crate::model::{BlockPartition, LambdaVector, PriorModel1, PriorModel2, WeightVector};
use crate::scalar::Real;
use crate::solve1d::bisect_nondecreasing;
use crate::specfun::{normalized_phi, normalized_psi};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Bisection tolerance on the minimizing `t`; the objective is locally
/// quadratic, so the bound itself is accurate to roughly the square of this.
const T_TOL: f64 = 1e-11;
/// Doubling limit while bracketing the root of the derivative.
const MAX_T_DOUBLINGS: usize = 200;
/// Samples per work unit when the Monte-Carlo estimator fans out; each batch
/// draws from its own deterministic stream so the total is independent of
/// thread scheduling.
const MC_BATCH: usize = 256;

/// Outcome of a bound evaluation.
#[derive(Debug, Clone)]
pub struct StatDimResult<R: Real> {
    /// The infimum value — an upper bound on the (expected) statistical
    /// dimension, between 0 and the ambient dimension `n`.
    pub bound: R,
    /// Minimizing `t`. Zero when every block is on-support, `+∞` (as a
    /// sentinel) when none is — the objective then decays monotonically and
    /// the infimum 0 is not attained.
    pub t_star: R,
    /// Per-block (or per-set, for Model 2) contribution at `t_star`, in
    /// partition order; sums to `bound`.
    pub per_block_terms: Vec<R>,
}

/// Weighted objective pieces shared by the fixed-support and expected
/// bounds: `on·(k + (tw)²) + off·φ̄(tw, k)` with `(on, off)` either a 0/1
/// membership indicator or `(p, 1-p)`.
struct MixTerm<R> {
    w: R,
    k: usize,
    on: R,
    off: R,
}

fn minimize_mix<R: Real>(terms: &[MixTerm<R>]) -> StatDimResult<R> {
    let sum_on_w2: R = terms.iter().map(|t| t.on * t.w * t.w).sum();
    let objective_terms = |t: R| -> Vec<R> {
        terms
            .iter()
            .map(|m| {
                let z = t * m.w;
                let mut v = m.on * (R::of_usize(m.k) + z * z);
                if m.off > R::zero() {
                    v += m.off * normalized_phi(z, m.k);
                }
                v
            })
            .collect()
    };

    // Fully on-support: the objective is n + t²Σw², minimized at t = 0.
    if terms.iter().all(|m| m.off == R::zero()) {
        let per = objective_terms(R::zero());
        return StatDimResult {
            bound: per.iter().copied().sum(),
            t_star: R::zero(),
            per_block_terms: per,
        };
    }
    // Fully off-support: every term decays to zero, infimum 0 at t → ∞.
    if sum_on_w2 == R::zero() {
        return StatDimResult {
            bound: R::zero(),
            t_star: R::infinity(),
            per_block_terms: vec![R::zero(); terms.len()],
        };
    }

    // Half the derivative; nondecreasing, negative at 0.
    let half_deriv = |t: R| -> R {
        let pull: R = terms
            .iter()
            .filter(|m| m.off > R::zero())
            .map(|m| m.off * m.w * normalized_psi(t * m.w, m.k))
            .sum();
        t * sum_on_w2 - pull
    };
    let mut hi = R::one();
    let mut doublings = 0;
    while half_deriv(hi) < R::zero() && doublings < MAX_T_DOUBLINGS {
        hi = hi + hi;
        doublings += 1;
    }
    let t_star = bisect_nondecreasing(half_deriv, R::zero(), hi, R::of(T_TOL));
    let per = objective_terms(t_star);
    StatDimResult {
        bound: per.iter().copied().sum(),
        t_star,
        per_block_terms: per,
    }
}

fn validate_support(partition: &BlockPartition, support: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; partition.q()];
    for &b in support {
        if b >= partition.q() {
            return Err(Error::InvalidArgument(format!(
                "support block {b} out of range for {} blocks",
                partition.q()
            )));
        }
        if mask[b] {
            return Err(Error::InvalidArgument(format!(
                "support block {b} listed twice"
            )));
        }
        mask[b] = true;
    }
    Ok(mask)
}

/// Upper bound on the statistical dimension of the descent cone at a vector
/// supported exactly on the blocks in `support`.
pub fn statdim_bound<R: Real>(
    partition: &BlockPartition,
    support: &[usize],
    w: &WeightVector<R>,
) -> Result<StatDimResult<R>> {
    if w.q() != partition.q() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} blocks",
            w.q(),
            partition.q()
        )));
    }
    let mask = validate_support(partition, support)?;
    let terms: Vec<MixTerm<R>> = (0..partition.q())
        .map(|b| MixTerm {
            w: w.get(b),
            k: partition.block_size(b),
            on: if mask[b] { R::one() } else { R::zero() },
            off: if mask[b] { R::zero() } else { R::one() },
        })
        .collect();
    Ok(minimize_mix(&terms))
}

/// Prior-averaged bound for Model 1: each block is on-support independently
/// with probability `p_b`, and the average is taken inside the infimum.
pub fn expected_bound_model1<R: Real>(
    partition: &BlockPartition,
    prior: &PriorModel1<R>,
    w: &WeightVector<R>,
) -> Result<StatDimResult<R>> {
    if prior.q() != partition.q() || w.q() != partition.q() {
        return Err(Error::DimensionMismatch(format!(
            "partition has {} blocks, prior {}, weights {}",
            partition.q(),
            prior.q(),
            w.q()
        )));
    }
    let terms: Vec<MixTerm<R>> = (0..partition.q())
        .map(|b| MixTerm {
            w: w.get(b),
            k: partition.block_size(b),
            on: prior.p(b),
            off: R::one() - prior.p(b),
        })
        .collect();
    Ok(minimize_mix(&terms))
}

/// Prior-averaged bound for Model 2 over equal-size-`k` blocks:
///
/// ```text
/// Σ_i k·α_i·|P_i|  +  inf_{t≥0} Σ_i |P_i|·[ t²λ_i²α_i + (1−α_i)·φ̄(t·λ_i, k) ] .
/// ```
///
/// `per_block_terms` holds one entry per *set*, in set order.
pub fn expected_bound_model2<R: Real>(
    prior: &PriorModel2<R>,
    k: usize,
    lambda: &LambdaVector<R>,
) -> Result<StatDimResult<R>> {
    if lambda.len() != prior.num_sets() {
        return Err(Error::DimensionMismatch(format!(
            "{} lambdas for {} sets",
            lambda.len(),
            prior.num_sets()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("block size k must be ≥ 1".into()));
    }
    let terms: Vec<MixTerm<R>> = (0..prior.num_sets())
        .map(|i| {
            let size = R::of_usize(prior.set(i).len());
            MixTerm {
                w: lambda.get(i),
                k,
                on: size * prior.alpha(i),
                off: size * (R::one() - prior.alpha(i)),
            }
        })
        .collect();
    Ok(minimize_mix(&terms))
}

/// Monte-Carlo estimate of the expected squared distance of a standard
/// Gaussian to the polar of the descent cone — the quantity the analytic
/// bound dominates. Returns `(mean, standard_error)`.
///
/// `directions` supplies the unit direction `x̂_b` of each on-support block,
/// aligned with `support`; by rotational symmetry the estimate's law does
/// not depend on the choice, which makes a good property test.
///
/// Per sample `g ~ N(0, I_n)` the inner problem is
///
/// ```text
/// min_{t ≥ 0}  Σ_{b∈B} ‖g_b − t·w_b·x̂_b‖²  +  Σ_{b∉B} max(‖g_b‖ − t·w_b, 0)² ,
/// ```
///
/// whose derivative in `t` is nondecreasing, so each sample is one cheap
/// bisection. Samples are drawn in fixed-size batches on independent
/// counter-mode streams and reduced in batch order: the result depends only
/// on `seed`, not on thread count.
pub fn empirical_statdim<R: Real>(
    partition: &BlockPartition,
    support: &[usize],
    w: &WeightVector<R>,
    directions: &[Vec<R>],
    n_samples: usize,
    seed: u64,
) -> Result<(R, R)> {
    if w.q() != partition.q() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} blocks",
            w.q(),
            partition.q()
        )));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    validate_support(partition, support)?;
    if directions.len() != support.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} directions for {} on-support blocks",
            directions.len(),
            support.len()
        )));
    }
    for (&b, dir) in support.iter().zip(directions) {
        if dir.len() != partition.block_size(b) {
            return Err(Error::DimensionMismatch(format!(
                "direction for block {b} has length {}, block size is {}",
                dir.len(),
                partition.block_size(b)
            )));
        }
        let norm2: R = dir.iter().map(|&v| v * v).sum();
        if (norm2.sqrt() - R::one()).abs() > R::of(1e-8) {
            return Err(Error::InvalidArgument(format!(
                "direction for block {b} is not unit norm (‖x̂‖ = {})",
                norm2.sqrt()
            )));
        }
    }

    let n = partition.n();
    let q = partition.q();
    let mut on_index: Vec<Option<usize>> = vec![None; q];
    for (i, &b) in support.iter().enumerate() {
        on_index[b] = Some(i);
    }

    let sample_value = |rng: &mut ChaCha8Rng| -> R {
        let g: Vec<R> = (0..n)
            .map(|_| R::of(StandardNormal.sample(rng)))
            .collect();
        // Per-block statistics: on-support blocks need ‖g_b‖² and ⟨g_b, x̂_b⟩;
        // off-support blocks only ‖g_b‖.
        let mut dots: Vec<R> = Vec::with_capacity(q);
        let mut norms: Vec<R> = Vec::with_capacity(q);
        for (b, on) in on_index.iter().enumerate() {
            let idx = partition.block(b);
            let norm2: R = idx.iter().map(|&i| g[i] * g[i]).sum();
            norms.push(norm2.sqrt());
            dots.push(match on {
                Some(s) => idx
                    .iter()
                    .zip(&directions[*s])
                    .map(|(&i, &d)| g[i] * d)
                    .sum(),
                None => R::zero(),
            });
        }
        let half_deriv = |t: R| -> R {
            let mut acc = R::zero();
            for b in 0..q {
                let wb = w.get(b);
                match on_index[b] {
                    Some(_) => acc += wb * (t * wb - dots[b]),
                    None => {
                        let slack = norms[b] - t * wb;
                        if slack > R::zero() {
                            acc -= wb * slack;
                        }
                    }
                }
            }
            acc
        };
        let t = if half_deriv(R::zero()) >= R::zero() {
            R::zero()
        } else {
            let mut hi = R::one();
            let mut doublings = 0;
            while half_deriv(hi) < R::zero() && doublings < MAX_T_DOUBLINGS {
                hi = hi + hi;
                doublings += 1;
            }
            bisect_nondecreasing(half_deriv, R::zero(), hi, R::of(T_TOL))
        };
        let mut val = R::zero();
        for b in 0..q {
            let wb = w.get(b);
            match on_index[b] {
                Some(_) => {
                    // ‖g_b − t w x̂‖² = ‖g_b‖² − 2 t w ⟨g_b, x̂⟩ + (t w)².
                    let tw = t * wb;
                    val += norms[b] * norms[b] - R::of(2.0) * tw * dots[b] + tw * tw;
                }
                None => {
                    let slack = norms[b] - t * wb;
                    if slack > R::zero() {
                        val += slack * slack;
                    }
                }
            }
        }
        val
    };

    let n_batches = n_samples.div_ceil(MC_BATCH);
    let batch_sums: Vec<(R, R)> = (0..n_batches)
        .into_par_iter()
        .map(|batch| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(batch as u64);
            let count = MC_BATCH.min(n_samples - batch * MC_BATCH);
            let mut s = R::zero();
            let mut s2 = R::zero();
            for _ in 0..count {
                let v = sample_value(&mut rng);
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (sum, sum2) = batch_sums
        .iter()
        .fold((R::zero(), R::zero()), |(a, b), &(s, s2)| (a + s, b + s2));
    let count = R::of_usize(n_samples);
    let mean = sum / count;
    let var = if n_samples > 1 {
        ((sum2 - sum * sum / count) / (count - R::one())).max(R::zero())
    } else {
        R::zero()
    };
    Ok((mean, (var / count).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_partition;
    use crate::weights::{solve_model1, solve_model2, WeightSolverConfig};
    use approx::assert_relative_eq;

    // Frozen from a derivative-root solve against an independent
    // incomplete-gamma implementation (scipy, double precision).
    const EX1_BOUND: f64 = 9.676_403_729_136_258;
    const EX1_T: f64 = 1.666_577_616_607_094;
    const M2_BOUND_STAR: f64 = 10.789_680_062_021_761;
    const M2_BOUND_ONES: f64 = 11.917_360_532_385_688;
    const M2_T_ONES: f64 = 0.970_421_849_610_025;
    const M1_MIXED_BOUND: f64 = 5.675_698_151_473_789;

    fn uniform_partition(q: usize, k: usize) -> BlockPartition {
        validate_partition(q * k, &vec![k; q]).unwrap()
    }

    #[test]
    fn frozen_fixed_support_example() {
        let part = uniform_partition(4, 5);
        let w = WeightVector::uniform(4);
        let r = statdim_bound(&part, &[0], &w).unwrap();
        assert_relative_eq!(r.bound, EX1_BOUND, max_relative = 1e-10);
        assert_relative_eq!(r.t_star, EX1_T, epsilon = 1e-8);
        assert_eq!(r.per_block_terms.len(), 4);
        let sum: f64 = r.per_block_terms.iter().sum();
        assert_relative_eq!(sum, r.bound, max_relative = 1e-14);
    }

    #[test]
    fn support_extremes() {
        let part = uniform_partition(3, 4);
        let w = WeightVector::new(vec![2.0_f64; 3]).unwrap();
        let full = statdim_bound(&part, &[0, 1, 2], &w).unwrap();
        assert_relative_eq!(full.bound, 12.0, epsilon = 1e-12);
        assert_eq!(full.t_star, 0.0);
        let empty = statdim_bound(&part, &[], &w).unwrap();
        assert_eq!(empty.bound, 0.0);
        assert!(empty.t_star.is_infinite());
    }

    #[test]
    fn bound_between_zero_and_n() {
        let part = validate_partition(17, &[3, 5, 1, 8]).unwrap();
        let w = WeightVector::new(vec![0.5, 2.0, 1.0, 3.3]).unwrap();
        for support in [vec![1], vec![0, 3], vec![2], vec![0, 1, 2, 3]] {
            let r = statdim_bound(&part, &support, &w).unwrap();
            assert!(r.bound >= 0.0 && r.bound <= 17.0 + 1e-12, "bound {}", r.bound);
        }
    }

    #[test]
    fn scale_invariance() {
        let part = validate_partition(14, &[2, 4, 4, 4]).unwrap();
        let w = WeightVector::new(vec![1.3, 0.4, 2.2, 0.9]).unwrap();
        let w_scaled = WeightVector::new(vec![1.3 * 37.0, 0.4 * 37.0, 2.2 * 37.0, 0.9 * 37.0]).unwrap();
        let a = statdim_bound(&part, &[1, 3], &w).unwrap();
        let b = statdim_bound(&part, &[1, 3], &w_scaled).unwrap();
        assert_relative_eq!(a.bound, b.bound, max_relative = 1e-8);
        assert_relative_eq!(a.t_star, b.t_star * 37.0, max_relative = 1e-6);
    }

    #[test]
    fn support_validation_errors() {
        let part = uniform_partition(2, 3);
        let w = WeightVector::<f64>::uniform(2);
        assert!(statdim_bound(&part, &[2], &w).is_err());
        assert!(statdim_bound(&part, &[0, 0], &w).is_err());
    }

    #[test]
    fn expected_model1_frozen_and_t_at_optimal_weights() {
        // With weights solving the optimality condition, the expected
        // objective is stationary in t exactly at t = 1.
        let part = validate_partition(9, &[2, 4, 3]).unwrap();
        let prior = PriorModel1::new(vec![0.3, 0.6, 0.15]).unwrap();
        let w = solve_model1(&prior, &part, &WeightSolverConfig::default()).unwrap();
        let r = expected_bound_model1(&part, &prior, &w).unwrap();
        assert_relative_eq!(r.t_star, 1.0, epsilon = 1e-7);
        assert_relative_eq!(r.bound, M1_MIXED_BOUND, max_relative = 1e-10);
    }

    #[test]
    fn expected_model1_degenerate_priors() {
        let part = uniform_partition(3, 2);
        let w = WeightVector::uniform(3);
        // Near-certain activation: bound approaches n at t ≈ 0.
        let hot = PriorModel1::clamped(vec![1.0, 1.0, 1.0]).unwrap();
        let r = expected_bound_model1(&part, &hot, &w).unwrap();
        assert!(r.bound > 6.0 - 1e-3 && r.bound <= 6.0 + 1e-9);
        // Near-certain silence: bound approaches 0.
        let cold = PriorModel1::clamped(vec![0.0, 0.0, 0.0]).unwrap();
        let r = expected_bound_model1(&part, &cold, &w).unwrap();
        assert!(r.bound < 1e-3);
    }

    #[test]
    fn expected_model2_frozen_and_optimal_beats_uniform() {
        let prior = PriorModel2::new(
            10,
            vec![(0..5).collect(), (5..10).collect()],
            vec![0.5_f64, 0.1],
            None,
        )
        .unwrap();
        let lam_star = solve_model2(&prior, 2, &WeightSolverConfig::default()).unwrap();
        let ones = LambdaVector::new(vec![1.0, 1.0]).unwrap();
        let r_star = expected_bound_model2(&prior, 2, &lam_star).unwrap();
        let r_ones = expected_bound_model2(&prior, 2, &ones).unwrap();
        assert_relative_eq!(r_star.bound, M2_BOUND_STAR, max_relative = 1e-10);
        assert_relative_eq!(r_star.t_star, 1.0, epsilon = 1e-7);
        assert_relative_eq!(r_ones.bound, M2_BOUND_ONES, max_relative = 1e-10);
        assert_relative_eq!(r_ones.t_star, M2_T_ONES, epsilon = 1e-7);
        assert!(r_star.bound < r_ones.bound);
    }

    #[test]
    fn model2_single_set_coincides_with_model1() {
        let part = uniform_partition(4, 3);
        let prior1 = PriorModel1::new(vec![0.3; 4]).unwrap();
        let w = WeightVector::new(vec![1.2; 4]).unwrap();
        let m1 = expected_bound_model1(&part, &prior1, &w).unwrap();
        let prior2 =
            PriorModel2::new(4, vec![(0..4).collect()], vec![0.3_f64], None).unwrap();
        let lam = LambdaVector::new(vec![1.2]).unwrap();
        let m2 = expected_bound_model2(&prior2, 3, &lam).unwrap();
        assert_relative_eq!(m1.bound, m2.bound, max_relative = 1e-10);
    }

    #[test]
    fn empirical_full_support_matches_closed_form() {
        // With every block on-support the inner problem is a ray projection:
        // E min_t ‖g − t·v‖² = n − E[max(N(0,1),0)²] = n − 1/2.
        let part = uniform_partition(4, 5);
        let w = WeightVector::uniform(4);
        let dirs: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut d = vec![0.0; 5];
                d[0] = 1.0;
                d
            })
            .collect();
        let (mean, se) = empirical_statdim(&part, &[0, 1, 2, 3], &w, &dirs, 4000, 11).unwrap();
        assert!((mean - 19.5).abs() < 3.0 * se + 0.05, "mean {mean}, se {se}");
    }

    #[test]
    fn empirical_below_bound_on_example() {
        let part = uniform_partition(4, 5);
        let w = WeightVector::uniform(4);
        let dirs = vec![{
            let mut d = vec![0.0; 5];
            d[2] = 1.0;
            d
        }];
        let (mean, se) = empirical_statdim(&part, &[0], &w, &dirs, 4000, 3).unwrap();
        assert!(
            mean <= EX1_BOUND + 3.0 * se,
            "mean {mean} exceeds bound {EX1_BOUND} + 3·{se}"
        );
        // Not vacuous: the estimate is in the bound's neighborhood.
        assert!(mean > 0.5 * EX1_BOUND);
    }

    #[test]
    fn empirical_is_deterministic_given_seed() {
        let part = uniform_partition(3, 2);
        let w = WeightVector::uniform(3);
        let dirs = vec![vec![std::f64::consts::FRAC_1_SQRT_2; 2]];
        let a = empirical_statdim(&part, &[1], &w, &dirs, 999, 42).unwrap();
        let b = empirical_statdim(&part, &[1], &w, &dirs, 999, 42).unwrap();
        assert_eq!(a, b);
        let c = empirical_statdim(&part, &[1], &w, &dirs, 999, 43).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn empirical_rejects_bad_directions() {
        let part = uniform_partition(2, 3);
        let w = WeightVector::<f64>::uniform(2);
        // Wrong length.
        assert!(empirical_statdim(&part, &[0], &w, &[vec![1.0, 0.0]], 10, 0).is_err());
        // Not unit norm.
        assert!(empirical_statdim(&part, &[0], &w, &[vec![2.0, 0.0, 0.0]], 10, 0).is_err());
        // Count mismatch.
        assert!(empirical_statdim(&part, &[0, 1], &w, &[vec![1.0, 0.0, 0.0]], 10, 0).is_err());
    }
}
