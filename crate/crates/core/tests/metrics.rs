use dsrm_core::eval::{group_comparison, kfold_split, mae, mnae, mse, partition_sizes, EvalPairs};
use proptest::prelude::*;

fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..60).prop_flat_map(|n| (prop::collection::vec(0.5f64..1000.0, n), prop::collection::vec(0.0f64..1200.0, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn mae_never_exceeds_mse((z, y) in pairs()) {
        let p = EvalPairs::new(z, y).unwrap();
        prop_assert!(mae(&p).unwrap() <= mse(&p).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn joint_scaling((z, y) in pairs(), s in 0.1f64..20.0) {
        let p = EvalPairs::new(z.clone(), y.clone()).unwrap();
        let q = EvalPairs::new(z.iter().map(|v| v * s).collect(), y.iter().map(|v| v * s).collect()).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        prop_assert!(close(mae(&q).unwrap(), s * mae(&p).unwrap()));
        prop_assert!(close(mse(&q).unwrap(), s * mse(&p).unwrap()));
        prop_assert!(close(mnae(&q).unwrap(), mnae(&p).unwrap()));
    }

    #[test]
    fn groups_partition_the_images((z, y) in pairs(), k in 1usize..12) {
        prop_assume!(k <= z.len());
        let p = EvalPairs::new(z.clone(), y).unwrap();
        let r = group_comparison(&p, k).unwrap();
        let mut seen: Vec<usize> = r.groups.iter().flat_map(|g| g.members.clone()).collect();
        let sizes: Vec<usize> = r.groups.iter().map(|g| g.members.len()).collect();
        prop_assert_eq!(sizes, partition_sizes(z.len(), k));
        let means: Vec<f64> = r.groups.iter().map(|g| g.mean_truth).collect();
        prop_assert!(means.windows(2).all(|w| w[0] <= w[1]));
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..z.len()).collect::<Vec<_>>());
    }

    #[test]
    fn folds_partition_the_items(n in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = kfold_split(n, k, seed).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert_eq!(sizes, partition_sizes(n, k));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}
