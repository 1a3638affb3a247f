//! Randomized invariant checks: partition tiling, prox optimality, the
//! scalar weight equation, and the order/scaling laws of the bound.

use bspw_core::model::{expand_lambda, validate_partition, BlockPartition};
use bspw_core::recovery::block_soft_threshold;
use bspw_core::specfun::normalized_psi;
use bspw_core::statdim::{expected_bound_model1, statdim_bound};
use bspw_core::weights::{solve_weight_scalar, WeightSolverConfig};
use bspw_core::{Complex64, PriorModel1, PriorModel2, WeightVector};
use proptest::prelude::*;

fn block_sizes() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..6, 1..10)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn contiguous_partition_tiles_the_ambient_dimension(sizes in block_sizes()) {
        let n: usize = sizes.iter().sum();
        let partition = validate_partition(n, &sizes).unwrap();
        prop_assert_eq!(partition.n(), n);
        prop_assert_eq!(partition.q(), sizes.len());
        let mut seen = Vec::new();
        for (b, &size) in sizes.iter().enumerate() {
            prop_assert_eq!(partition.block_size(b), size);
            seen.extend_from_slice(partition.block(b));
        }
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn scattered_partition_accepts_any_disjoint_tiling(
        (sizes, perm) in block_sizes().prop_flat_map(|sizes| {
            let n: usize = sizes.iter().sum();
            let perm = Just((0..n).collect::<Vec<_>>()).prop_shuffle();
            (Just(sizes), perm)
        }),
    ) {
        let n = perm.len();
        let mut rest = perm.as_slice();
        let mut blocks = Vec::new();
        for &s in &sizes {
            let (head, tail) = rest.split_at(s);
            blocks.push(head.to_vec());
            rest = tail;
        }
        let partition = BlockPartition::from_blocks(n, blocks.clone()).unwrap();
        let mut seen: Vec<usize> = (0..partition.q()).flat_map(|b| partition.block(b).to_vec()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    /// The prox of `τ·‖·‖₂`: either the input lands inside the dual ball and
    /// the output is zero, or the residual `v − u` has length exactly `τ`
    /// and points along `u`.
    #[test]
    fn block_shrink_satisfies_the_prox_conditions(
        v in prop::collection::vec(-10.0f64..10.0, 1..6),
        tau in 0.01f64..5.0,
    ) {
        let u = block_soft_threshold(&v, tau);
        let vn = norm(&v);
        if vn <= tau {
            prop_assert!(u.iter().all(|&x| x == 0.0));
        } else {
            let un = norm(&u);
            prop_assert!((un - (vn - tau)).abs() < 1e-10 * vn.max(1.0));
            for (&vi, &ui) in v.iter().zip(&u) {
                prop_assert!((vi - ui - tau * ui / un).abs() < 1e-10 * vn.max(1.0));
            }
        }
    }

    #[test]
    fn complex_block_shrink_scales_the_phase_untouched(
        re in prop::collection::vec(-5.0f64..5.0, 1..5),
        im in prop::collection::vec(-5.0f64..5.0, 1..5),
        tau in 0.01f64..5.0,
    ) {
        let len = re.len().min(im.len());
        let v: Vec<Complex64> = (0..len).map(|i| Complex64::new(re[i], im[i])).collect();
        let u = block_soft_threshold(&v, tau);
        let vn = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vn <= tau {
            prop_assert!(u.iter().all(|z| z.norm() == 0.0));
        } else {
            // Shrinkage is a positive real scaling, so each entry keeps its
            // phase: u_i · v̄_i must be (positive) real.
            let scale = (vn - tau) / vn;
            for (zv, zu) in v.iter().zip(&u) {
                prop_assert!((zu - zv * scale).norm() < 1e-10 * vn.max(1.0));
            }
        }
    }

    /// The solved scalar weight satisfies its defining balance and shrinks
    /// as the activation probability grows.
    #[test]
    fn scalar_weight_balances_the_tail_equation(
        p in 0.01f64..0.97,
        dp in 0.005f64..0.2,
        k in 1usize..=25,
    ) {
        let cfg = WeightSolverConfig::default();
        let w = solve_weight_scalar(p, k, &cfg).unwrap();
        prop_assert!(w > 0.0);
        let lhs = p / (1.0 - p) * w;
        let rhs = normalized_psi(w, k);
        prop_assert!((lhs - rhs).abs() < 1e-9 * lhs.max(1.0), "residual at p={p}, k={k}");

        let p2 = (p + dp).min(0.985);
        let w2 = solve_weight_scalar(p2, k, &cfg).unwrap();
        prop_assert!(w2 < w, "w(p) must fall as p rises: w({p})={w}, w({p2})={w2}");
    }

    #[test]
    fn tail_balance_function_decreases_in_its_argument(
        z1 in 0.0f64..6.0,
        dz in 0.01f64..3.0,
        k in 1usize..=25,
    ) {
        let z2 = z1 + dz;
        let a = normalized_psi(z1, k);
        let b = normalized_psi(z2, k);
        prop_assert!(a >= b);
        if b > 1e-12 {
            prop_assert!(a > b);
        }
    }

    /// The bound is squeezed between the dimension counted on the active
    /// blocks and the ambient dimension, and rescaling all weights by a
    /// common factor moves it not at all.
    #[test]
    fn bound_respects_dimension_bracket_and_weight_scale(
        (sizes, mask, raw_w) in block_sizes().prop_flat_map(|sizes| {
            let q = sizes.len();
            let mask = prop::collection::vec(any::<bool>(), q);
            let w = prop::collection::vec(0.05f64..5.0, q);
            (Just(sizes), mask, w)
        }),
        log_c in -3.0f64..3.0,
    ) {
        let n: usize = sizes.iter().sum();
        let partition = validate_partition(n, &sizes).unwrap();
        let support: Vec<usize> =
            (0..sizes.len()).filter(|&b| mask[b]).collect();
        let w = WeightVector::new(raw_w.clone()).unwrap();
        let r = statdim_bound(&partition, &support, &w).unwrap();

        let active_dim: usize = support.iter().map(|&b| sizes[b]).sum();
        if support.is_empty() {
            prop_assert_eq!(r.bound, 0.0);
            prop_assert!(r.t_star.is_infinite());
        } else {
            prop_assert!(r.bound >= active_dim as f64 - 1e-9);
            prop_assert!(r.bound <= n as f64 + 1e-9);
        }

        let c = 10f64.powf(log_c);
        let scaled = WeightVector::new(raw_w.iter().map(|x| c * x).collect()).unwrap();
        let rs = statdim_bound(&partition, &support, &scaled).unwrap();
        prop_assert!((rs.bound - r.bound).abs() <= 1e-8 * (1.0 + r.bound));
    }

    /// Expanding per-set values onto the grid gives every block the value of
    /// the set containing it, with the uncovered remainder served last.
    #[test]
    fn lambda_expansion_respects_set_membership(
        (q, perm, a_len, b_len, k) in (3usize..10).prop_flat_map(|q| {
            let perm = Just((0..q).collect::<Vec<_>>()).prop_shuffle();
            (Just(q), perm, 1usize..q, 1usize..q, 1usize..4)
        }),
        lam_raw in prop::collection::vec(0.1f64..4.0, 3),
    ) {
        let a_len = a_len.min(q - 1);
        let b_len = b_len.min(q - a_len);
        let sets = vec![perm[..a_len].to_vec(), perm[a_len..a_len + b_len].to_vec()];
        let uncovered = q - a_len - b_len;
        let complement = (uncovered > 0).then_some(0.3);
        let prior = PriorModel2::new(q, sets.clone(), vec![0.8, 0.4], complement).unwrap();

        let num_lambda = 2 + usize::from(uncovered > 0);
        let lambda = bspw_core::LambdaVector::new(lam_raw[..num_lambda].to_vec()).unwrap();
        let partition = validate_partition(q * k, &vec![k; q]).unwrap();
        let w = expand_lambda(&partition, &prior, &lambda).unwrap();

        prop_assert_eq!(w.q(), q);
        for (i, set) in sets.iter().enumerate() {
            for &b in set {
                prop_assert_eq!(w.get(b), lambda.get(i));
            }
        }
        if uncovered > 0 {
            let covered: Vec<usize> = sets.concat();
            for b in (0..q).filter(|b| !covered.contains(b)) {
                prop_assert_eq!(w.get(b), lambda.get(2));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Averaging the per-support bound over the prior can only fall below
    /// the prior-averaged bound, because the average of minima never beats
    /// the minimum of the average.
    #[test]
    fn expected_bound_dominates_the_support_average(
        sizes in prop::collection::vec(1usize..4, 1..6),
        seed_p in prop::collection::vec(0.05f64..0.95, 5),
        raw_w in prop::collection::vec(0.05f64..5.0, 5),
    ) {
        let q = sizes.len();
        let n: usize = sizes.iter().sum();
        let partition = validate_partition(n, &sizes).unwrap();
        let probs: Vec<f64> = seed_p[..q].to_vec();
        let prior = PriorModel1::new(probs.clone()).unwrap();
        let w = WeightVector::new(raw_w[..q].to_vec()).unwrap();

        let expected = expected_bound_model1(&partition, &prior, &w).unwrap().bound;
        let mut average = 0.0;
        for mask in 0..(1usize << q) {
            let support: Vec<usize> = (0..q).filter(|b| mask >> b & 1 == 1).collect();
            let prob: f64 = (0..q)
                .map(|b| if mask >> b & 1 == 1 { probs[b] } else { 1.0 - probs[b] })
                .product();
            average += prob * statdim_bound(&partition, &support, &w).unwrap().bound;
        }
        prop_assert!(
            average <= expected + 1e-7 * (1.0 + expected),
            "E[bound at support] = {average} must not exceed the averaged bound {expected}"
        );
    }
}
