//! Set-retrieval scores and confusion matrices.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use uedetect_learn::detector::{Label, NUM_LABELS};

/// Micro-averaged counts with derived scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Scores from counts. Empty denominators score 1.0: nothing was
    /// expected and nothing was reported.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    pub fn add(&mut self, other: &Prf) {
        *self = Prf::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_);
    }

    /// Counts of `found` against `expected`.
    pub fn of_sets<T: Ord>(found: &BTreeSet<T>, expected: &BTreeSet<T>) -> Self {
        let tp = found.intersection(expected).count();
        Prf::from_counts(tp, found.len() - tp, expected.len() - tp)
    }

    /// Whether the stored scores follow from the counts.
    pub fn is_consistent(&self) -> bool {
        let again = Prf::from_counts(self.tp, self.fp, self.fn_);
        (again.precision - self.precision).abs() <= 1e-12
            && (again.recall - self.recall).abs() <= 1e-12
            && (again.f1 - self.f1).abs() <= 1e-12
    }
}

/// Rows are true labels, columns predictions, both in [`Label::ALL`] order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[usize; NUM_LABELS]; NUM_LABELS],
}

impl Confusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut c = Confusion::default();
        for (truth, pred) in pairs {
            c.counts[truth.index()][pred.index()] += 1;
        }
        c
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, label: Label) -> usize {
        self.counts[label.index()].iter().sum()
    }

    pub fn correct(&self) -> usize {
        (0..NUM_LABELS).map(|i| self.counts[i][i]).sum()
    }

    /// 0.0 on an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    /// Per-class recall; `None` for classes without support.
    pub fn class_accuracy(&self, label: Label) -> Option<f64> {
        match self.support(label) {
            0 => None,
            n => Some(self.counts[label.index()][label.index()] as f64 / n as f64),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_empty() {
        let s: BTreeSet<u8> = [1, 2, 3].into();
        let p = Prf::of_sets(&s, &s);
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let e = Prf::of_sets(&BTreeSet::<u8>::new(), &BTreeSet::new());
        assert_eq!(e.f1, 1.0);
    }

    #[test]
    fn one_miss() {
        let found: BTreeSet<u8> = [1, 2].into();
        let expected: BTreeSet<u8> = [1, 2, 3].into();
        let p = Prf::of_sets(&found, &expected);
        assert_eq!((p.tp, p.fp, p.fn_), (2, 0, 1));
        assert_eq!(p.precision, 1.0);
        assert!((p.f1 - 0.8).abs() < 1e-12);
        assert!(p.is_consistent());
    }

    #[test]
    fn confusion_rows_are_supports() {
        use Label::*;
        let c = Confusion::from_pairs([(Porn, Porn), (Porn, Legitimate), (Legitimate, Legitimate)]);
        assert_eq!(c.support(Porn), 2);
        assert_eq!(c.total(), 3);
        assert!((c.accuracy() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.class_accuracy(GamblingGame), None);
        assert_eq!(c.class_accuracy(Porn), Some(0.5));
    }
}
