//! Property tests for the algebraic and order-theoretic invariants the
//! pipeline leans on: the max-min closure, path edge sets, and the
//! monotone behavior of quantiles, p-values, and selection thresholds.

mod common;

use ndarray::Array2;
use proptest::prelude::*;

use logan::boolmat::{bool_mult, bool_star, threshold_binary};
use logan::boot::{p_value, upper_quantile};
use logan::debias::path_edge_set;
use logan::mediate::{multisplit_combine, screen_cut};

fn nonneg_matrix(dim: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(0.0f64..2.0, dim * dim)
        .prop_map(move |v| Array2::from_shape_vec((dim, dim), v).expect("length matches"))
}

fn sparse_nonneg_matrix(dim: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec((0.0f64..2.0, prop::bool::weighted(0.4)), dim * dim).prop_map(move |v| {
        let values: Vec<f64> = v.into_iter().map(|(x, keep)| if keep { x } else { 0.0 }).collect();
        Array2::from_shape_vec((dim, dim), values).expect("length matches")
    })
}

proptest! {
    // The product only ever selects entries, so both groupings of a triple
    // product must agree exactly, not merely within tolerance.
    #[test]
    fn max_min_product_is_associative(
        dim in 2usize..6,
        seed in 0u64..1u64 << 48,
    ) {
        let mut r = common::rng(seed);
        let draw = |r: &mut _| Array2::from_shape_fn((dim, dim), |_| rand::Rng::random_range(r, 0.0..2.0));
        let a = draw(&mut r);
        let b = draw(&mut r);
        let c = draw(&mut r);
        let left = bool_mult(&bool_mult(&a, &b).unwrap(), &c).unwrap();
        let right = bool_mult(&a, &bool_mult(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn closure_dominates_the_input_and_never_invents_weight(w in sparse_nonneg_matrix(6)) {
        let star = bool_star(&w).unwrap();
        let max_entry = w.iter().cloned().fold(0.0f64, f64::max);
        for (idx, &v) in star.indexed_iter() {
            prop_assert!(v >= w[idx]);
            prop_assert!(v <= max_entry);
        }
    }

    // Two acyclic paths a -> b and b -> c can only meet at b, so their
    // concatenation is again a path and closing a closure adds nothing.
    // On cyclic inputs this genuinely fails; the test pins the acyclic case
    // the pipeline relies on.
    #[test]
    fn closure_is_idempotent_on_dags(
        dim in 3usize..9,
        density in 0.05f64..0.7,
        seed in 0u64..1u64 << 48,
    ) {
        let w = common::random_dag(&mut common::rng(seed), dim, density).mapv(f64::abs);
        let star = bool_star(&w).unwrap();
        let again = bool_star(&star).unwrap();
        prop_assert_eq!(again, star);
    }

    #[test]
    fn closure_is_monotone_in_the_weights(
        w in sparse_nonneg_matrix(6),
        bumps in prop::collection::vec(0.0f64..1.0, 36),
    ) {
        let mut larger = w.clone();
        for (entry, bump) in larger.iter_mut().zip(bumps) {
            *entry += bump;
        }
        let small = bool_star(&w).unwrap();
        let large = bool_star(&larger).unwrap();
        for (s, l) in small.iter().zip(large.iter()) {
            prop_assert!(s <= l);
        }
    }

    // The closure must agree exactly with brute-force enumeration of
    // simple paths, existence and strength both.
    #[test]
    fn closure_matches_path_enumeration_on_random_dags(
        dim in 3usize..9,
        density in 0.05f64..0.6,
        seed in 0u64..1u64 << 48,
    ) {
        let w = common::random_dag(&mut common::rng(seed), dim, density);
        let star = bool_star(&w.mapv(f64::abs)).unwrap();
        for q1 in 0..dim {
            for q2 in 0..dim {
                if q1 == q2 {
                    continue;
                }
                let oracle = common::dfs_max_min(&w, q1, q2);
                prop_assert_eq!(star[[q2, q1]], oracle, "path {} -> {}", q1, q2);
            }
        }
    }

    #[test]
    fn path_edge_sets_match_path_enumeration(
        dim in 3usize..9,
        density in 0.1f64..0.6,
        seed in 0u64..1u64 << 48,
    ) {
        let w = common::random_dag(&mut common::rng(seed), dim, density);
        let support = threshold_binary(&w, 0.0);
        let reach = bool_star(&support).unwrap();
        for q1 in 0..dim {
            for q2 in 0..dim {
                if q1 == q2 {
                    continue;
                }
                let got = path_edge_set(&support, &reach, q1, q2).unwrap();
                let want = common::dfs_path_edges(&support, q1, q2);
                prop_assert_eq!(got.iter().copied().collect::<std::collections::BTreeSet<_>>(), want);
            }
        }
    }

    #[test]
    fn upper_quantile_is_monotone_and_within_the_sample(
        samples in prop::collection::vec(-1e3f64..1e3, 1..200),
        lo in 0.01f64..0.5,
        hi in 0.5f64..0.99,
    ) {
        let tight = upper_quantile(&samples, lo);
        let loose = upper_quantile(&samples, hi);
        prop_assert!(tight >= loose);
        prop_assert!(samples.contains(&tight));
        prop_assert!(samples.contains(&loose));
    }

    #[test]
    fn p_value_is_antitone_in_the_observed_statistic(
        samples in prop::collection::vec(0.0f64..10.0, 1..200),
        a in 0.0f64..10.0,
        b in 0.0f64..10.0,
    ) {
        let (small, large) = if a <= b { (a, b) } else { (b, a) };
        let p_small = p_value(&samples, small);
        let p_large = p_value(&samples, large);
        prop_assert!(p_large <= p_small);
        prop_assert!((0.0..=1.0).contains(&p_small));
        prop_assert!((0.0..=1.0).contains(&p_large));
    }

    #[test]
    fn multisplit_combination_is_monotone_bounded_and_conservative(
        ps in prop::collection::vec(0.0f64..1.0, 1..20),
        bumps in prop::collection::vec(0.0f64..0.5, 20),
        gamma in 0.05f64..0.95,
    ) {
        let combined = multisplit_combine(&ps, gamma).unwrap();
        prop_assert!(combined > 0.0 || ps.iter().any(|&p| p == 0.0));
        prop_assert!(combined <= 1.0);
        let floor = ps.iter().cloned().fold(f64::INFINITY, f64::min) / gamma;
        prop_assert!(combined >= floor.min(1.0) - 1e-12);
        let larger: Vec<f64> = ps
            .iter()
            .zip(&bumps)
            .map(|(&p, &b)| (p + b).min(1.0))
            .collect();
        let combined_larger = multisplit_combine(&larger, gamma).unwrap();
        prop_assert!(combined_larger >= combined);
    }

    // The screening threshold is the largest candidate whose survivor
    // count keeps the product below the level; every larger candidate must
    // violate that bound.
    #[test]
    fn screening_cut_is_the_maximal_feasible_candidate(
        ps in prop::collection::vec(0.0f64..1.0, 1..40),
        alpha in 0.01f64..0.5,
    ) {
        let d = ps.len();
        let cut = screen_cut(&ps, alpha);
        let feasible = |c: f64| {
            let kept = ps.iter().filter(|&&p| p <= c).count();
            c * kept as f64 <= alpha
        };
        if cut > alpha / d as f64 {
            prop_assert!(feasible(cut));
        }
        for k in 1..=d {
            let candidate = alpha / k as f64;
            if candidate > cut {
                prop_assert!(!feasible(candidate));
            }
        }
    }
}
