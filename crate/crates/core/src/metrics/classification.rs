use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::answer::{match_diagnosis, Detection, ParsedAnswer};
use crate::dataset::Diagnosis;

/// Binary confusion counts; the positive class is "abnormality present".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn add(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// An `Invalid` verdict is counted as the wrong class for either truth.
    pub fn add_detection(&mut self, truth: bool, verdict: Detection) {
        let predicted = verdict.as_bool().unwrap_or(!truth);
        self.add(truth, predicted);
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and their harmonic mean; `0/0` is taken as 0.
pub fn precision_recall_f1(c: &ConfusionCounts) -> Prf {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn), which keeps the integer path exact.
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
    Prf {
        precision,
        recall,
        f1,
    }
}

/// Joint detection + diagnosis correctness `c(i)` for one sample.
pub fn diagnosis_indicator(
    gt_detection: bool,
    gt_diagnosis: Option<&Diagnosis>,
    parsed: &ParsedAnswer,
) -> u8 {
    match (gt_detection, parsed.detection) {
        (false, Detection::No) => 1,
        (true, Detection::Yes) => {
            let (Some(dx), Some(segment)) = (gt_diagnosis, parsed.diagnosis_segment.as_deref())
            else {
                return 0;
            };
            match_diagnosis(segment, &dx.label, &dx.synonyms) as u8
        }
        _ => 0,
    }
}

/// F1 of the correctness vector against an all-ones truth vector.
pub fn diagnosis_f1(indicators: &[u8]) -> Result<f64, MetricError> {
    if indicators.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut c = ConfusionCounts::default();
    for &v in indicators {
        match v {
            0 => c.add(true, false),
            1 => c.add(true, true),
            other => return Err(MetricError::Indicator(other)),
        }
    }
    Ok(precision_recall_f1(&c).f1)
}

/// Plain mean of the correctness vector.
pub fn diagnosis_accuracy(indicators: &[u8]) -> Result<f64, MetricError> {
    if indicators.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let ones = indicators.iter().filter(|&&v| v == 1).count();
    Ok(ones as f64 / indicators.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prf_examples() {
        let perfect = precision_recall_f1(&ConfusionCounts::new(1, 0, 0, 5));
        assert_eq!((perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0));
        let degenerate = precision_recall_f1(&ConfusionCounts::new(0, 0, 0, 5));
        assert_eq!((degenerate.precision, degenerate.recall, degenerate.f1), (0.0, 0.0, 0.0));
        let half = precision_recall_f1(&ConfusionCounts::new(1, 0, 1, 1));
        assert_eq!(half.precision, 1.0);
        assert_eq!(half.recall, 0.5);
        assert!((half.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_detection_is_always_wrong() {
        let mut c = ConfusionCounts::default();
        c.add_detection(true, Detection::Invalid);
        c.add_detection(false, Detection::Invalid);
        assert_eq!(c, ConfusionCounts::new(0, 1, 1, 0));
    }

    fn dx(label: &str) -> Diagnosis {
        Diagnosis {
            label: label.into(),
            synonyms: vec![label.into()],
        }
    }

    #[test]
    fn indicator_cases() {
        let neg = ParsedAnswer::parse("1. No.");
        assert_eq!(diagnosis_indicator(false, None, &neg), 1);
        let covid = dx("COVID-19");
        let good = ParsedAnswer::parse("1. Yes. 2. COVID-19.");
        assert_eq!(diagnosis_indicator(true, Some(&covid), &good), 1);
        let wrong = ParsedAnswer::parse("1. Yes. 2. Pneumonia.");
        assert_eq!(diagnosis_indicator(true, Some(&covid), &wrong), 0);
        assert_eq!(diagnosis_indicator(true, Some(&covid), &neg), 0);
        assert_eq!(diagnosis_indicator(false, None, &good), 0);
        let invalid = ParsedAnswer::parse("COVID-19 is visible");
        assert_eq!(diagnosis_indicator(true, Some(&covid), &invalid), 0);
    }

    #[test]
    fn diagnosis_f1_examples() {
        assert_eq!(diagnosis_f1(&[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(diagnosis_f1(&[0, 0]).unwrap(), 0.0);
        // TP = 2, FP = 0, FN = 1
        assert!((diagnosis_f1(&[1, 1, 0]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(diagnosis_f1(&[]), Err(MetricError::EmptyInput));
        assert_eq!(diagnosis_f1(&[2]), Err(MetricError::Indicator(2)));
        assert!((diagnosis_accuracy(&[1, 1, 0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }
}
