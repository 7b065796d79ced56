//! Binary classification metrics over confusion counts, with the positive
//! class meaning "contains element".

/// Confusion counts plus the derived fractions. Precision/recall divisions by
/// zero yield 0 and set `zero_division`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub zero_division: bool,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Metrics {
        let total = tp + fp + tn + fn_;
        let accuracy = if total == 0 {
            0.0
        } else {
            (tp + tn) as f64 / total as f64
        };
        let mut zero_division = false;
        let precision = if tp + fp == 0 {
            zero_division = true;
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            zero_division = true;
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = f1_score(precision, recall);
        if zero_division {
            log::warn!("metrics computed with an empty predicted-positive or actual-positive set");
        }
        Metrics {
            tp,
            fp,
            tn,
            fn_,
            accuracy,
            precision,
            recall,
            f1,
            zero_division,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Incremental confusion counter for streaming evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConfusionCounter {
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
}

impl ConfusionCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, predicted_positive: bool, actual_positive: bool) {
        match (predicted_positive, actual_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn metrics(&self) -> Metrics {
        Metrics::from_counts(self.tp, self.fp, self.tn, self.fn_)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_table_arithmetic() {
        // published test rows: F1 recomputed from printed precision/recall
        assert!((f1_score(0.85, 0.83) - 0.84).abs() < 0.01); // cornucopia
        assert!((f1_score(0.70, 0.81) - 0.75).abs() < 0.01); // eagle
        assert!((f1_score(0.85, 0.83) - 0.8399).abs() < 1e-3);
    }

    #[test]
    fn perfect_predictions() {
        let m = Metrics::from_counts(5, 0, 5, 0);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f1, 1.0);
        assert!(!m.zero_division);
    }

    #[test]
    fn zero_division_flags() {
        // never predicts positive: precision undefined -> 0 with flag
        let m = Metrics::from_counts(0, 0, 6, 4);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.f1, 0.0);
        assert!(m.zero_division);
    }

    #[test]
    fn counter_matches_direct_formula() {
        let mut c = ConfusionCounter::new();
        let outcomes = [
            (true, true),
            (true, false),
            (false, true),
            (false, false),
            (true, true),
        ];
        for (p, a) in outcomes {
            c.record(p, a);
        }
        let m = c.metrics();
        assert_eq!((m.tp, m.fp, m.tn, m.fn_), (2, 1, 1, 1));
        assert_eq!(m.accuracy, 3.0 / 5.0);
        assert_eq!(m.precision, 2.0 / 3.0);
        assert_eq!(m.recall, 2.0 / 3.0);
    }
}
