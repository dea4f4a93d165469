//! Reference predictors that write prediction files without a model.

pub mod synth;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    render_answer_with_label, render_gt_answer, LoadedManifest, ManifestError, VqaSegSample};
use crate::eval::{FsMasks, GtMaskSource, PredictionRecord};
use crate::mask_io::{MaskIoError, TransportedMask};
use crate::metrics::BinaryMask;
use crate::rng::keyed_rng;
use crate::templates::{seg_token_name, Templates};

const NOISE_DOMAIN: &str = "noisy-oracle";
/// Diagnosis text used when a policy claims a finding the sample lacks.
pub const UNSPECIFIED_FINDING: &str = "unspecified abnormality";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    Gt,
    Fixed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskFill {
    Empty,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorPolicy {
    Oracle,
    AlwaysNegative,
    AlwaysPositive(LabelMode),
    ConstantMask(MaskFill),
    NoisyOracle { flip_prob: f64, seed: u64 },
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("flip probability {0} outside [0, 1]")]
    FlipProb(f64),
    #[error("ground-truth mask for `{sample}`: {source}")]
    Mask {
        sample: String,
        #[source]
        source: MaskIoError,
    },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("writing predictions: {0}")]
    Io(#[from] std::io::Error),
}

impl PredictorPolicy {
    pub fn validate(&self) -> Result<(), PredictError> {
        if let PredictorPolicy::NoisyOracle { flip_prob, .. } = self {
            if !(0.0..=1.0).contains(flip_prob) {
                return Err(PredictError::FlipProb(*flip_prob));
            }
        }
        Ok(())
    }

    /// Parses `oracle`, `always-negative`, `always-positive[:LABEL]`,
    /// `constant-mask:empty|full` or `noisy-oracle:P`; the seed only
    /// matters for the noisy oracle.
    pub fn parse(spec: &str, seed: u64) -> Result<Self, String> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let policy = match (name, arg) {
            ("oracle", None) => PredictorPolicy::Oracle,
            ("always-negative", None) => PredictorPolicy::AlwaysNegative,
            ("always-positive", None) => PredictorPolicy::AlwaysPositive(LabelMode::Gt),
            ("always-positive", Some(l)) if !l.trim().is_empty() => {
                PredictorPolicy::AlwaysPositive(LabelMode::Fixed(l.to_string()))
            }
            ("constant-mask", Some("empty")) => PredictorPolicy::ConstantMask(MaskFill::Empty),
            ("constant-mask", Some("full")) => PredictorPolicy::ConstantMask(MaskFill::Full),
            ("noisy-oracle", Some(p)) => PredictorPolicy::NoisyOracle {
                flip_prob: p.parse().map_err(|_| format!("bad flip probability `{p}`"))?,
                seed,
            },
            _ => return Err(format!("unknown policy `{spec}`")),
        };
        policy.validate().map_err(|e| e.to_string())?;
        Ok(policy)
    }
}

impl FromStr for PredictorPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s, 0)
    }
}

impl fmt::Display for PredictorPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorPolicy::Oracle => f.write_str("oracle"),
            PredictorPolicy::AlwaysNegative => f.write_str("always-negative"),
            PredictorPolicy::AlwaysPositive(LabelMode::Gt) => f.write_str("always-positive"),
            PredictorPolicy::AlwaysPositive(LabelMode::Fixed(l)) => write!(f, "always-positive:{l}"),
            PredictorPolicy::ConstantMask(MaskFill::Empty) => f.write_str("constant-mask:empty"),
            PredictorPolicy::ConstantMask(MaskFill::Full) => f.write_str("constant-mask:full"),
            PredictorPolicy::NoisyOracle { flip_prob, .. } => write!(f, "noisy-oracle:{flip_prob}"),
        }
    }
}

fn gt_masks(
    sample: &VqaSegSample,
    masks: &dyn GtMaskSource,
) -> Result<Vec<BinaryMask>, PredictError> {
    sample
        .gt_targets
        .iter()
        .map(|t| {
            masks.load(t).map_err(|source| PredictError::Mask {
                sample: sample.id.clone(),
                source,
            })
        })
        .collect()
}

fn encode_all(masks: &[BinaryMask]) -> Vec<TransportedMask> {
    masks
        .iter()
        .enumerate()
        .map(|(i, m)| TransportedMask::encode(seg_token_name(i), m))
        .collect()
}

fn record(sample: &VqaSegSample, answer: String, masks: Vec<TransportedMask>) -> PredictionRecord {
    PredictionRecord {
        sample_id: sample.id.clone(),
        answer,
        masks,
    }
}

fn oracle(
    sample: &VqaSegSample,
    masks: &dyn GtMaskSource,
    templates: &Templates,
) -> Result<PredictionRecord, PredictError> {
    let gt = gt_masks(sample, masks)?;
    Ok(record(sample, render_gt_answer(sample, templates), encode_all(&gt)))
}

fn claim_positive(sample: &VqaSegSample, label: &str) -> PredictionRecord {
    record(sample, format!("1. Yes. 2. There is {label}."), Vec::new())
}

fn predict_one(
    sample: &VqaSegSample,
    policy: &PredictorPolicy,
    masks: &dyn GtMaskSource,
    templates: &Templates,
) -> Result<PredictionRecord, PredictError> {
    match policy {
        PredictorPolicy::Oracle => oracle(sample, masks, templates),
        PredictorPolicy::AlwaysNegative => Ok(record(
            sample,
            templates.vqaseg_negative_answer.clone(),
            Vec::new(),
        )),
        PredictorPolicy::AlwaysPositive(mode) => {
            let fixed = match mode {
                LabelMode::Gt => None,
                LabelMode::Fixed(l) => Some(l.as_str()),
            };
            if sample.gt_detection {
                let gt = gt_masks(sample, masks)?;
                let text = render_answer_with_label(sample, fixed, templates);
                Ok(record(sample, text, encode_all(&gt)))
            } else {
                Ok(claim_positive(sample, fixed.unwrap_or(UNSPECIFIED_FINDING)))
            }
        }
        PredictorPolicy::ConstantMask(fill) => {
            let gt = gt_masks(sample, masks)?;
            let constant: Vec<BinaryMask> = gt
                .iter()
                .map(|m| {
                    let (w, h) = m.dims();
                    match fill {
                        MaskFill::Empty => BinaryMask::empty(w, h),
                        MaskFill::Full => BinaryMask::full(w, h),
                    }
                    .expect("dimensions of a loaded mask")
                })
                .collect();
            Ok(record(
                sample,
                render_gt_answer(sample, templates),
                encode_all(&constant),
            ))
        }
        PredictorPolicy::NoisyOracle { flip_prob, seed } => {
            let flip = keyed_rng(NOISE_DOMAIN, *seed, &sample.id).gen::<f64>() < *flip_prob;
            match (flip, sample.gt_detection) {
                (false, _) => oracle(sample, masks, templates),
                (true, true) => Ok(record(
                    sample,
                    templates.vqaseg_negative_answer.clone(),
                    Vec::new(),
                )),
                (true, false) => Ok(claim_positive(sample, UNSPECIFIED_FINDING)),
            }
        }
    }
}

/// One prediction per sample, sorted by sample id.
pub fn predict(
    samples: &[VqaSegSample],
    policy: &PredictorPolicy,
    masks: &dyn GtMaskSource,
    templates: &Templates,
) -> Result<Vec<PredictionRecord>, PredictError> {
    policy.validate()?;
    let mut out: Vec<PredictionRecord> = samples
        .par_iter()
        .map(|s| predict_one(s, policy, masks, templates))
        .collect::<Result<_, _>>()?;
    out.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    Ok(out)
}

pub fn predict_manifest(
    manifest: &LoadedManifest,
    policy: &PredictorPolicy,
    templates: &Templates,
) -> Result<Vec<PredictionRecord>, PredictError> {
    let samples = manifest.manifest.vqaseg_samples(templates)?;
    predict(&samples, policy, &FsMasks::new(&manifest.base_dir), templates)
}

pub fn write_jsonl<W: Write>(records: &[PredictionRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn to_jsonl(records: &[PredictionRecord]) -> String {
    let mut buf = Vec::new();
    write_jsonl(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}
