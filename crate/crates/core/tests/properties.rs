use std::collections::HashSet;

use proptest::prelude::*;

use cpr::data::Trajectory;
use cpr::metrics::{auroc, brier, pearson, RecoveryPair, ScoredSet};
use cpr::simulator::{simulate, SimFamily, SimSpec};
use cpr::training::split_patients;

/// Scores in [0, 1] with both classes present.
fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..40).prop_flat_map(|n| {
        (prop::collection::vec(0u8..=20, n), prop::collection::vec(0u8..2, n)).prop_map(|(s, mut l)| {
            l[0] = 0;
            l[1] = 1;
            (s.into_iter().map(|v| f64::from(v) / 20.0).collect(), l)
        })
    })
}

fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..40).prop_flat_map(|n| {
        (prop::collection::vec(-10.0..10.0f64, n), prop::collection::vec(-10.0..10.0f64, n))
    })
}

proptest! {
    #[test]
    fn auroc_is_rank_based((s, l) in scored(), scale in 0.1..5.0f64) {
        let a = auroc(&ScoredSet::new(s.clone(), l.clone()).unwrap()).unwrap();
        let t: Vec<f64> = s.iter().map(|v| (scale * v).tanh()).collect();
        prop_assert_eq!(auroc(&ScoredSet::new(t, l.clone()).unwrap()).unwrap(), a);
        let flipped: Vec<u8> = l.iter().map(|v| 1 - v).collect();
        let b = auroc(&ScoredSet::new(s, flipped).unwrap()).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brier_is_symmetric_under_label_flip((s, l) in scored()) {
        let a = brier(&ScoredSet::new(s.clone(), l.clone()).unwrap()).unwrap();
        let s2: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
        let l2: Vec<u8> = l.iter().map(|v| 1 - v).collect();
        let b = brier(&ScoredSet::new(s2, l2).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn pearson_is_affine_invariant((x, y) in paired(), m in 0.1..10.0f64, c in -5.0..5.0f64) {
        let Ok(r) = pearson(&RecoveryPair::new(x.clone(), y.clone()).unwrap()) else { return Ok(()) };
        prop_assert!((-1.0..=1.0).contains(&r));
        let xa: Vec<f64> = x.iter().map(|v| m * v + c).collect();
        let ra = pearson(&RecoveryPair::new(xa, y.clone()).unwrap()).unwrap();
        prop_assert!((r - ra).abs() < 1e-9);
        let xn: Vec<f64> = x.iter().map(|v| -v).collect();
        let rn = pearson(&RecoveryPair::new(xn, y).unwrap()).unwrap();
        prop_assert!((r + rn).abs() < 1e-9);
    }

    #[test]
    fn patient_split_partitions(n in 3usize..120, seed in any::<u64>()) {
        let data: Vec<Trajectory> = (0..n)
            .map(|i| Trajectory { id: format!("p{i}"), static_ctx: None, obs: vec![vec![0.0]], actions: vec![1], truth: None })
            .collect();
        // Too few patients to populate every split is an error, not a silent empty split.
        let Ok(s) = split_patients(&data, (0.6, 0.2, 0.2), seed) else {
            prop_assert!(n < 4);
            return Ok(());
        };
        let ids = |v: &[Trajectory]| v.iter().map(|t| t.id.clone()).collect::<HashSet<_>>();
        let (a, b, c) = (ids(&s.train), ids(&s.val), ids(&s.test));
        prop_assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        prop_assert_eq!(a.len() + b.len() + c.len(), n);
        prop_assert!(!b.is_empty() && !c.is_empty());
    }

    #[test]
    fn simulation_is_a_function_of_the_seed(seed in any::<u64>(), fam in 0usize..3) {
        let family = [SimFamily::Heterogeneous, SimFamily::Homogeneous, SimFamily::Threshold][fam];
        let spec = SimSpec { n: 5, ..SimSpec::defaults(family, seed) };
        let a = simulate(&spec).unwrap();
        prop_assert_eq!(&a, &simulate(&spec).unwrap());
        for t in &a {
            let truth = t.truth.as_ref().unwrap();
            prop_assert_eq!(truth.len(), t.len());
            prop_assert!(truth.iter().all(|s| (0.0..=1.0).contains(&s.p)));
        }
    }
}
