//! Gated three-step scoring.
//!
//! Per sample: detection first; a wrong (or unparseable) verdict stops the
//! evaluation. Diagnosis second; a wrong diagnosis stops it again. Only
//! ground-truth-positive samples that pass both steps reach segmentation,
//! where seg tokens are bound to transported masks and scored with Dice.
//!
//! The amputated modes drop steps: `DetectOnly` stops after detection;
//! `DiagnoseOnly` and `DiagnoseSeg` do not require a binary step-1 token and
//! search the whole answer for the diagnosis label.

mod aggregate;
mod render;
mod run;
mod vqa;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{aggregate, EvalReport, GateCounts, ModalityReport, RunMetadata};
pub use render::{render_report, ReportFormat};
pub use run::{
    evaluate_records, evaluate_run, read_predictions, PredictionSet, RunOutcome,
    DICE_BINDING_POLICY,
};
pub use vqa::{evaluate_vqa, ClosedScores, OpenScoresSummary, VqaReport};

use crate::answer::{bind_masks, match_diagnosis, Detection, ParsedAnswer};
use crate::dataset::{Modality, SegTarget, TargetKind, VqaSegSample};
use crate::mask_io::{load_mask, MaskIoError, TransportedMask, DEFAULT_THRESHOLD};
use crate::metrics::{diagnosis_indicator, dice_score, BinaryMask};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub answer: String,
    #[serde(default)]
    pub masks: Vec<TransportedMask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    Full,
    DetectOnly,
    DiagnoseOnly,
    DiagnoseSeg,
}

impl EvalMode {
    pub fn scores_diagnosis(self) -> bool {
        !matches!(self, EvalMode::DetectOnly)
    }

    pub fn scores_segmentation(self) -> bool {
        matches!(self, EvalMode::Full | EvalMode::DiagnoseSeg)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Full => "full",
            EvalMode::DetectOnly => "detect-only",
            EvalMode::DiagnoseOnly => "diagnose-only",
            EvalMode::DiagnoseSeg => "diagnose-seg",
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(EvalMode::Full),
            "detect-only" => Ok(EvalMode::DetectOnly),
            "diagnose-only" => Ok(EvalMode::DiagnoseOnly),
            "diagnose-seg" => Ok(EvalMode::DiagnoseSeg),
            other => Err(format!(
                "unknown mode `{other}` (full, detect-only, diagnose-only, diagnose-seg)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Passed,
    FailedDetection,
    FailedDiagnosis,
    FailedBinding,
    MissingPrediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleVerdict {
    pub sample_id: String,
    pub modality: Modality,
    pub gt_detection: bool,
    pub detection_pred: Detection,
    pub detection_correct: bool,
    pub diagnosis_correct: u8,
    pub gate: Gate,
    /// Mean Dice per target kind; only for passing ground-truth-positive samples.
    pub dice_by_kind: BTreeMap<TargetKind, f64>,
    /// Bound masks that could not be scored (bad run lengths or wrong size).
    pub invalid_masks: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binding_error: Option<String>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ground-truth mask for `{sample}`: {source}")]
    GroundTruthMask {
        sample: String,
        #[source]
        source: MaskIoError,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Manifest(#[from] crate::dataset::ManifestError),
    #[error("no verdict for manifest sample `{0}`")]
    MissingVerdict(String),
    #[error("verdict for `{0}` does not match any manifest sample")]
    UnknownVerdict(String),
    #[error("more than one verdict for `{0}`")]
    DuplicateVerdict(String),
    #[error("parallelism must be at least 1")]
    Parallelism,
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Where ground-truth masks come from.
pub trait GtMaskSource: Sync {
    fn load(&self, target: &SegTarget) -> Result<BinaryMask, MaskIoError>;
}

/// PNG masks resolved against a manifest directory.
#[derive(Debug, Clone)]
pub struct FsMasks {
    pub base_dir: PathBuf,
    pub threshold: u8,
}

impl FsMasks {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        FsMasks {
            base_dir: base_dir.into(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl GtMaskSource for FsMasks {
    fn load(&self, target: &SegTarget) -> Result<BinaryMask, MaskIoError> {
        let p = if target.mask_path.is_absolute() {
            target.mask_path.clone()
        } else {
            self.base_dir.join(&target.mask_path)
        };
        load_mask(&p, self.threshold)
    }
}

/// In-memory masks keyed by `mask_path`.
#[derive(Debug, Clone, Default)]
pub struct MemoryMasks(pub std::collections::HashMap<PathBuf, BinaryMask>);

impl GtMaskSource for MemoryMasks {
    fn load(&self, target: &SegTarget) -> Result<BinaryMask, MaskIoError> {
        self.0.get(&target.mask_path).cloned().ok_or_else(|| MaskIoError::Read {
            path: target.mask_path.display().to_string(),
            source: image::ImageError::IoError(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "not in memory mask set",
            )),
        })
    }
}

// Amputated diagnosis: no binary token needed, label searched in the whole answer.
fn relaxed_indicator(sample: &VqaSegSample, parsed: &ParsedAnswer) -> u8 {
    match &sample.gt_diagnosis {
        None => (parsed.detection == Detection::No) as u8,
        Some(dx) => (parsed.detection != Detection::No
            && match_diagnosis(&parsed.raw, &dx.label, &dx.synonyms)) as u8,
    }
}

/// Scores one sample. Prediction failures become verdict states; only
/// unreadable ground truth is an error.
pub fn evaluate_sample(
    sample: &VqaSegSample,
    pred: Option<&PredictionRecord>,
    mode: EvalMode,
    masks: &dyn GtMaskSource,
) -> Result<SampleVerdict, EvalError> {
    let mut v = SampleVerdict {
        sample_id: sample.id.clone(),
        modality: sample.modality,
        gt_detection: sample.gt_detection,
        detection_pred: Detection::Invalid,
        detection_correct: false,
        diagnosis_correct: 0,
        gate: Gate::MissingPrediction,
        dice_by_kind: BTreeMap::new(),
        invalid_masks: 0,
        binding_error: None,
    };
    let Some(pred) = pred else {
        return Ok(v);
    };
    let parsed = ParsedAnswer::parse(&pred.answer);
    v.detection_pred = parsed.detection;
    v.detection_correct = parsed.detection.matches(sample.gt_detection);

    let diagnosis = match mode {
        EvalMode::DetectOnly => {
            v.gate = if v.detection_correct {
                Gate::Passed
            } else {
                Gate::FailedDetection
            };
            return Ok(v);
        }
        EvalMode::Full => {
            if !v.detection_correct {
                v.gate = Gate::FailedDetection;
                return Ok(v);
            }
            diagnosis_indicator(
                sample.gt_detection,
                sample.gt_diagnosis.as_ref(),
                &parsed,
            )
        }
        EvalMode::DiagnoseOnly | EvalMode::DiagnoseSeg => relaxed_indicator(sample, &parsed),
    };
    if diagnosis == 0 {
        v.gate = Gate::FailedDiagnosis;
        return Ok(v);
    }
    v.diagnosis_correct = 1;

    if mode.scores_segmentation() && sample.gt_detection {
        let bindings = match bind_masks(&parsed.seg_refs, &pred.masks, &sample.gt_targets) {
            Ok(b) => b,
            Err(e) => {
                v.gate = Gate::FailedBinding;
                v.binding_error = Some(e.to_string());
                return Ok(v);
            }
        };
        let mut per_kind: BTreeMap<TargetKind, Vec<f64>> = BTreeMap::new();
        for b in &bindings {
            let target = &sample.gt_targets[b.target_index];
            let gt = masks
                .load(target)
                .map_err(|source| EvalError::GroundTruthMask {
                    sample: sample.id.clone(),
                    source,
                })?;
            let scored = pred.masks[b.mask_index]
                .decode()
                .ok()
                .and_then(|m| dice_score(&m, &gt).ok());
            match scored {
                Some(d) => per_kind.entry(target.kind).or_default().push(d),
                None => v.invalid_masks += 1,
            }
        }
        v.dice_by_kind = per_kind
            .into_iter()
            .map(|(k, ds)| (k, ds.iter().sum::<f64>() / ds.len() as f64))
            .collect();
    }
    v.gate = Gate::Passed;
    Ok(v)
}
