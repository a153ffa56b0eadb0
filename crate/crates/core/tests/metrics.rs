use proptest::prelude::*;
use tagbench_core::metrics::{pr_auc, roc_auc};
use tagbench_testkit::{average_precision_prefix, roc_auc_pairwise};

/// Scores drawn from a coarse grid so ties are common, with at least one
/// positive and one negative label.
fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..=64)
        .prop_flat_map(|n| (prop::collection::vec(0u8..12, n), prop::collection::vec(any::<bool>(), n)))
        .prop_map(|(grid, mut labels)| {
            labels[0] = true;
            labels[1] = false;
            (grid.into_iter().map(|g| g as f64 / 11.0).collect(), labels)
        })
}

fn distinct_instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..=64)
        .prop_flat_map(|n| (Just(n), prop::collection::vec(any::<bool>(), n), any::<u64>()))
        .prop_map(|(n, mut labels, salt)| {
            labels[0] = true;
            labels[1] = false;
            // distinct by construction: a permutation of 0..n
            let mut s: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let mut state = salt | 1;
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                s.swap(i, (state >> 33) as usize % (i + 1));
            }
            (s, labels)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn roc_matches_pairwise_oracle((s, l) in instance()) {
        prop_assert!((roc_auc(&s, &l).unwrap() - roc_auc_pairwise(&s, &l)).abs() < 1e-9);
    }

    #[test]
    fn pr_matches_prefix_oracle((s, l) in instance()) {
        prop_assert!((pr_auc(&s, &l).unwrap() - average_precision_prefix(&s, &l)).abs() < 1e-9);
    }

    #[test]
    fn roc_ignores_monotone_transforms((s, l) in instance(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let base = roc_auc(&s, &l).unwrap();
        let affine: Vec<f64> = s.iter().map(|x| a * x + b).collect();
        let exp: Vec<f64> = s.iter().map(|x| x.exp()).collect();
        prop_assert!((roc_auc(&affine, &l).unwrap() - base).abs() < 1e-12);
        prop_assert!((roc_auc(&exp, &l).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn negated_scores_complement_without_ties((s, l) in distinct_instance()) {
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        prop_assert!((roc_auc(&s, &l).unwrap() + roc_auc(&neg, &l).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn values_lie_in_unit_interval((s, l) in instance()) {
        for v in [roc_auc(&s, &l).unwrap(), pr_auc(&s, &l).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
