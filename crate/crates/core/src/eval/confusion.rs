use crate::error::{Error, Result};
use crate::postprocess::Detection;

/// Highest detection confidence, 0 when there is none.
pub fn image_score(dets: &[Detection]) -> f32 {
    dets.iter().map(|d| d.confidence).fold(0.0, f32::max)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Image-level counts; an image is called positive when its score is
/// strictly above `threshold`.
pub fn confusion(scores: &[f32], labels: &[bool], threshold: f32) -> Result<ConfusionCounts> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (l, s > threshold) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Ratios from a confusion table; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn scalar_metrics(c: &ConfusionCounts) -> ScalarMetrics {
    let sensitivity = ratio(c.tp, c.tp + c.fn_);
    let precision = ratio(c.tp, c.tp + c.fp);
    let f1 = match (precision, sensitivity) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ScalarMetrics {
        sensitivity,
        specificity: ratio(c.tn, c.tn + c.fp),
        precision,
        recall: sensitivity,
        accuracy: ratio(c.tp + c.tn, c.total()),
        f1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use proptest::prelude::*;

    fn det(conf: f32) -> Detection {
        Detection {
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            confidence: conf,
            class_id: 0,
        }
    }

    #[test]
    fn image_scores() {
        assert_eq!(image_score(&[]), 0.0);
        assert_eq!(image_score(&[det(0.7)]), 0.7);
        assert_eq!(image_score(&[det(0.6), det(0.9), det(0.3)]), 0.9);
    }

    #[test]
    fn confusion_examples() {
        let c = confusion(&[0.9, 0.1], &[true, false], 0.5).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 1,
                fp: 0,
                tn: 1,
                fn_: 0
            }
        );
        let c = confusion(&[0.5], &[true], 0.5).unwrap();
        assert_eq!(c.fn_, 1);
        assert!(confusion(&[0.1], &[], 0.5).is_err());
    }

    #[test]
    fn metric_examples() {
        let m = scalar_metrics(&ConfusionCounts {
            tp: 47,
            fp: 0,
            tn: 0,
            fn_: 3,
        });
        assert!((m.sensitivity.unwrap() - 0.94).abs() < 1e-12);
        assert_eq!(m.specificity, None);
        let m = scalar_metrics(&ConfusionCounts {
            tp: 5,
            fp: 5,
            tn: 5,
            fn_: 5,
        });
        assert_eq!(m.accuracy, Some(0.5));
        assert_eq!(m.f1, m.precision);
        assert_eq!(m.f1, m.recall);
        // precision 1, recall 0.95
        let m = scalar_metrics(&ConfusionCounts {
            tp: 19,
            fp: 0,
            tn: 0,
            fn_: 1,
        });
        assert!((m.f1.unwrap() - 0.974_358_974).abs() < 1e-6);
        let m = scalar_metrics(&ConfusionCounts::default());
        assert_eq!(m.accuracy, None);
    }

    proptest! {
        #[test]
        fn counts_match_recount(pairs in prop::collection::vec((0.0f32..1.0, any::<bool>()), 1..200)) {
            let scores: Vec<f32> = pairs.iter().map(|p| p.0).collect();
            let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            let c = confusion(&scores, &labels, 0.5).unwrap();
            let count = |want_label: bool, want_pred: bool| {
                pairs.iter().filter(|(s, l)| *l == want_label && (*s > 0.5) == want_pred).count()
            };
            prop_assert_eq!(c.tp, count(true, true));
            prop_assert_eq!(c.fn_, count(true, false));
            prop_assert_eq!(c.fp, count(false, true));
            prop_assert_eq!(c.tn, count(false, false));
        }

        #[test]
        fn raising_threshold_is_monotone(
            pairs in prop::collection::vec((0.0f32..1.0, any::<bool>()), 1..100),
            t1 in 0.0f32..1.0,
            dt in 0.0f32..0.5,
        ) {
            let scores: Vec<f32> = pairs.iter().map(|p| p.0).collect();
            let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            let lo = confusion(&scores, &labels, t1).unwrap();
            let hi = confusion(&scores, &labels, t1 + dt).unwrap();
            prop_assert!(hi.tp <= lo.tp);
            prop_assert!(hi.tn >= lo.tn);
        }

        #[test]
        fn accuracy_mixes_sensitivity_and_specificity(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
            let c = ConfusionCounts { tp, fp, tn, fn_ };
            let m = scalar_metrics(&c);
            if let (Some(sens), Some(spec), Some(acc)) = (m.sensitivity, m.specificity, m.accuracy) {
                let prev = (tp + fn_) as f64 / c.total() as f64;
                prop_assert!((acc - (prev * sens + (1.0 - prev) * spec)).abs() < 1e-12);
            }
        }
    }
}
