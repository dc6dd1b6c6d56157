use proptest::prelude::*;
use std::collections::BTreeSet;
use uedetect_harness::metrics::{Confusion, Prf};
use uedetect_learn::detector::Label;

proptest! {
    #[test]
    fn set_scores_are_bounded_and_consistent(
        found in prop::collection::btree_set(0u8..40, 0..20),
        expected in prop::collection::btree_set(0u8..40, 0..20),
    ) {
        let p = Prf::of_sets(&found, &expected);
        prop_assert!(p.is_consistent());
        prop_assert_eq!(p.tp + p.fp, found.len());
        prop_assert_eq!(p.tp + p.fn_, expected.len());
        for v in [p.precision, p.recall, p.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(p.f1 <= p.precision.max(p.recall) + 1e-12);
        prop_assert!(p.f1 + 1e-12 >= p.precision.min(p.recall));
        prop_assert_eq!(p.f1 == 1.0, found == expected);
    }

    #[test]
    fn micro_average_equals_pooled_counts(
        parts in prop::collection::vec((0usize..10, 0usize..10, 0usize..10), 1..6),
    ) {
        let mut acc = Prf::from_counts(0, 0, 0);
        for &(tp, fp, fn_) in &parts {
            acc.add(&Prf::from_counts(tp, fp, fn_));
        }
        let (tp, fp, fn_) = parts.iter().fold((0, 0, 0), |a, p| (a.0 + p.0, a.1 + p.1, a.2 + p.2));
        prop_assert_eq!(acc, Prf::from_counts(tp, fp, fn_));
    }

    #[test]
    fn confusion_arithmetic(pairs in prop::collection::vec((0usize..5, 0usize..5), 0..60)) {
        let labeled: Vec<(Label, Label)> = pairs
            .iter()
            .map(|&(t, p)| (Label::from_index(t).unwrap(), Label::from_index(p).unwrap()))
            .collect();
        let c = Confusion::from_pairs(labeled.iter().copied());
        prop_assert_eq!(c.total(), pairs.len());
        let supports: usize = Label::ALL.iter().map(|&l| c.support(l)).sum();
        prop_assert_eq!(supports, pairs.len());
        let correct = pairs.iter().filter(|(t, p)| t == p).count();
        prop_assert_eq!(c.correct(), correct);
        if !pairs.is_empty() {
            prop_assert!((c.accuracy() - correct as f64 / pairs.len() as f64).abs() < 1e-12);
        }
        for l in Label::ALL {
            let n = labeled.iter().filter(|(t, _)| *t == l).count();
            prop_assert_eq!(c.class_accuracy(l).is_some(), n > 0);
        }
    }
}

#[test]
fn empty_sets_score_perfectly() {
    let e: BTreeSet<u8> = BTreeSet::new();
    assert_eq!(Prf::of_sets(&e, &e).f1, 1.0);
    assert_eq!(Prf::of_sets(&BTreeSet::from([1u8]), &e).precision, 0.0);
}
