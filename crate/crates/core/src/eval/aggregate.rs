use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{EvalError, EvalMode, Gate, SampleVerdict};
use crate::dataset::{Modality, TargetKind, VqaSegSample};
use crate::metrics::sum::pairwise_sum_slice;
use crate::metrics::{diagnosis_accuracy, diagnosis_f1, precision_recall_f1, ConfusionCounts, LossWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GateCounts {
    pub passed: u64,
    pub failed_detection: u64,
    pub failed_diagnosis: u64,
    pub failed_binding: u64,
    pub missing_prediction: u64,
}

impl GateCounts {
    fn add(&mut self, gate: Gate) {
        match gate {
            Gate::Passed => self.passed += 1,
            Gate::FailedDetection => self.failed_detection += 1,
            Gate::FailedDiagnosis => self.failed_diagnosis += 1,
            Gate::FailedBinding => self.failed_binding += 1,
            Gate::MissingPrediction => self.missing_prediction += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.passed
            + self.failed_detection
            + self.failed_diagnosis
            + self.failed_binding
            + self.missing_prediction
    }
}

/// Scores for one modality (or for all samples).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityReport {
    pub n_samples: u64,
    pub detection: ConfusionCounts,
    pub detection_precision: f64,
    pub detection_recall: f64,
    pub detection_f1: f64,
    pub diagnosis_f1: Option<f64>,
    pub diagnosis_accuracy: Option<f64>,
    /// Binding failures contribute Dice 0.
    pub dice_org_mean: Option<f64>,
    pub dice_abn_mean: Option<f64>,
    /// Binding failures left out.
    pub dice_org_mean_excluding_binding_failures: Option<f64>,
    pub dice_abn_mean_excluding_binding_failures: Option<f64>,
    pub n_dice_org: u64,
    pub n_dice_abn: u64,
    pub invalid_masks: u64,
    pub gates: GateCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub mode: EvalMode,
    pub manifest_sha256: String,
    pub predictions_sha256: String,
    pub dice_binding_failure_policy: String,
    pub loss_weights: LossWeights,
    pub n_predictions: u64,
    pub n_malformed_lines: u64,
    pub n_duplicate_predictions: u64,
    pub n_unknown_predictions: u64,
    pub warnings: Vec<String>,
}

impl RunMetadata {
    pub fn has_prediction_warnings(&self) -> bool {
        self.n_malformed_lines + self.n_duplicate_predictions + self.n_unknown_predictions > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: RunMetadata,
    pub modalities: BTreeMap<Modality, ModalityReport>,
    pub overall: ModalityReport,
}

#[derive(Default)]
struct Acc {
    detection: ConfusionCounts,
    indicators: Vec<u8>,
    dice_org: Vec<f64>,
    dice_abn: Vec<f64>,
    dice_org_excl: Vec<f64>,
    dice_abn_excl: Vec<f64>,
    invalid_masks: u64,
    gates: GateCounts,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| pairwise_sum_slice(v) / v.len() as f64)
}

impl Acc {
    fn push(&mut self, v: &SampleVerdict, sample: &VqaSegSample, mode: EvalMode) {
        self.detection.add_detection(v.gt_detection, v.detection_pred);
        self.indicators.push(v.diagnosis_correct);
        self.invalid_masks += v.invalid_masks as u64;
        self.gates.add(v.gate);
        if !mode.scores_segmentation() || !sample.gt_detection {
            return;
        }
        match v.gate {
            Gate::Passed => {
                for (kind, &d) in &v.dice_by_kind {
                    let (primary, excl) = match kind {
                        TargetKind::Organ => (&mut self.dice_org, &mut self.dice_org_excl),
                        TargetKind::Abnormality => (&mut self.dice_abn, &mut self.dice_abn_excl),
                    };
                    primary.push(d);
                    excl.push(d);
                }
            }
            Gate::FailedBinding => {
                let has = |k| sample.gt_targets.iter().any(|t| t.kind == k);
                if has(TargetKind::Organ) {
                    self.dice_org.push(0.0);
                }
                if has(TargetKind::Abnormality) {
                    self.dice_abn.push(0.0);
                }
            }
            _ => {}
        }
    }

    fn finish(self, mode: EvalMode) -> ModalityReport {
        let prf = precision_recall_f1(&self.detection);
        let diag = mode.scores_diagnosis() && !self.indicators.is_empty();
        let seg = mode.scores_segmentation();
        ModalityReport {
            n_samples: self.gates.total(),
            detection: self.detection,
            detection_precision: prf.precision,
            detection_recall: prf.recall,
            detection_f1: prf.f1,
            diagnosis_f1: diag.then(|| diagnosis_f1(&self.indicators).expect("non-empty 0/1")),
            diagnosis_accuracy: diag
                .then(|| diagnosis_accuracy(&self.indicators).expect("non-empty")),
            dice_org_mean: seg.then(|| mean(&self.dice_org)).flatten(),
            dice_abn_mean: seg.then(|| mean(&self.dice_abn)).flatten(),
            dice_org_mean_excluding_binding_failures: seg
                .then(|| mean(&self.dice_org_excl))
                .flatten(),
            dice_abn_mean_excluding_binding_failures: seg
                .then(|| mean(&self.dice_abn_excl))
                .flatten(),
            n_dice_org: self.dice_org.len() as u64,
            n_dice_abn: self.dice_abn.len() as u64,
            invalid_masks: self.invalid_masks,
            gates: self.gates,
        }
    }
}

/// Aggregates verdicts in manifest order, per modality and overall.
///
/// The verdict list may be in any order; it must hold exactly one verdict
/// per sample.
pub fn aggregate(
    verdicts: &[SampleVerdict],
    samples: &[VqaSegSample],
    metadata: RunMetadata,
) -> Result<EvalReport, EvalError> {
    let mut by_id: HashMap<&str, &SampleVerdict> = HashMap::with_capacity(verdicts.len());
    for v in verdicts {
        if by_id.insert(v.sample_id.as_str(), v).is_some() {
            return Err(EvalError::DuplicateVerdict(v.sample_id.clone()));
        }
    }
    let known: HashSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    if let Some(extra) = verdicts.iter().find(|v| !known.contains(v.sample_id.as_str())) {
        return Err(EvalError::UnknownVerdict(extra.sample_id.clone()));
    }
    let mode = metadata.mode;
    let mut per: BTreeMap<Modality, Acc> = BTreeMap::new();
    let mut all = Acc::default();
    for s in samples {
        let v = by_id
            .get(s.id.as_str())
            .ok_or_else(|| EvalError::MissingVerdict(s.id.clone()))?;
        per.entry(s.modality).or_default().push(v, s, mode);
        all.push(v, s, mode);
    }
    Ok(EvalReport {
        modalities: per.into_iter().map(|(m, a)| (m, a.finish(mode))).collect(),
        overall: all.finish(mode),
        metadata,
    })
}
