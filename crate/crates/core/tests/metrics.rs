//! Detection metrics against exhaustive recounting, plus invariances.

mod common;

use cai_lab::detect::{average_precision, best_f1, roc_auc};
use common::{brute_ap, brute_auc, brute_f1};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..120, prop::bool::ANY).prop_flat_map(|(n, coarse)| {
        let score = if coarse {
            (0u8..6).prop_map(|v| v as f64 / 5.0).boxed()
        } else {
            (-1e3f64..1e3).boxed()
        };
        (prop::collection::vec(score, n), prop::collection::vec(prop::bool::ANY, n))
    })
}

proptest! {
    #[test]
    fn metrics_match_brute_force((scores, labels) in instance()) {
        let pos = labels.iter().filter(|l| **l).count();
        prop_assume!(pos > 0 && pos < labels.len());
        prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), brute_auc(&scores, &labels));
        prop_assert_eq!(average_precision(&scores, &labels).unwrap(), brute_ap(&scores, &labels));
        let f = best_f1(&scores, &labels).unwrap();
        prop_assert_eq!((f.f1, f.threshold), brute_f1(&scores, &labels));
    }

    #[test]
    fn metrics_are_invariant_to_monotone_transforms((scores, labels) in instance(), c in 0.1f64..10.0) {
        let pos = labels.iter().filter(|l| **l).count();
        prop_assume!(pos > 0 && pos < labels.len());
        let warped: Vec<f64> = scores.iter().map(|s| (s / 1e3).atan() * c + 3.0).collect();
        prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), roc_auc(&warped, &labels).unwrap());
        prop_assert_eq!(average_precision(&scores, &labels).unwrap(), average_precision(&warped, &labels).unwrap());
        prop_assert_eq!(best_f1(&scores, &labels).unwrap().f1, best_f1(&warped, &labels).unwrap().f1);
    }

    #[test]
    fn auc_complements_under_label_flip((scores, labels) in instance()) {
        let pos = labels.iter().filter(|l| **l).count();
        prop_assume!(pos > 0 && pos < labels.len());
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let a = roc_auc(&scores, &labels).unwrap() + roc_auc(&scores, &flipped).unwrap();
        prop_assert!((a - 1.0).abs() < 1e-12);
    }
}
