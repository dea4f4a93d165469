//! Prediction-file reading and whole-run evaluation.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;

use super::{
    aggregate, evaluate_sample, EvalError, EvalMode, EvalReport, FsMasks, GtMaskSource,
    PredictionRecord, RunMetadata, SampleVerdict,
};
use crate::dataset::{LoadedManifest, VqaSegSample};
use crate::hashing::sha256_hex;
use crate::metrics::LossWeights;
use crate::templates::Templates;
use crate::TOOL_VERSION;

/// How binding failures enter the primary Dice means.
pub const DICE_BINDING_POLICY: &str = "include_as_zero";

/// Predictions keyed by sample id, plus what went wrong while reading them.
#[derive(Debug, Clone, Default)]
pub struct PredictionSet {
    pub records: HashMap<String, PredictionRecord>,
    pub sha256: String,
    pub n_lines: u64,
    pub malformed: Vec<String>,
    pub duplicates: Vec<String>,
}

impl PredictionSet {
    /// Parses JSONL. Malformed lines are recorded and skipped; for repeated
    /// sample ids the last record wins.
    pub fn from_jsonl(text: &str) -> Self {
        let mut set = PredictionSet {
            sha256: sha256_hex(text.as_bytes()),
            ..Default::default()
        };
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            set.n_lines += 1;
            let rec: PredictionRecord = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(e) => {
                    set.malformed.push(format!("line {}: {e}", i + 1));
                    continue;
                }
            };
            if rec.sample_id.is_empty() {
                set.malformed.push(format!("line {}: empty sample_id", i + 1));
                continue;
            }
            if set.records.contains_key(&rec.sample_id) {
                set.duplicates.push(format!(
                    "line {}: duplicate prediction for `{}`, keeping the last",
                    i + 1,
                    rec.sample_id
                ));
            }
            set.records.insert(rec.sample_id.clone(), rec);
        }
        set
    }

    pub fn from_records(records: impl IntoIterator<Item = PredictionRecord>) -> Self {
        let lines: Vec<String> = records
            .into_iter()
            .map(|r| serde_json::to_string(&r).expect("prediction serializes"))
            .collect();
        Self::from_jsonl(&lines.join("\n"))
    }
}

pub fn read_predictions(path: &Path) -> Result<PredictionSet, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(PredictionSet::from_jsonl(&text))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: EvalReport,
    pub verdicts: Vec<SampleVerdict>,
}

/// Evaluates every sample with a pool of `parallelism` workers.
///
/// Verdicts are collected in sample order and reduced serially, so the
/// report does not depend on the worker count.
pub fn evaluate_records(
    samples: &[VqaSegSample],
    predictions: &PredictionSet,
    mode: EvalMode,
    parallelism: usize,
    masks: &dyn GtMaskSource,
    manifest_sha256: &str,
    loss_weights: LossWeights,
) -> Result<RunOutcome, EvalError> {
    if parallelism == 0 {
        return Err(EvalError::Parallelism);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| EvalError::ThreadPool(e.to_string()))?;
    let verdicts: Vec<SampleVerdict> = pool.install(|| {
        samples
            .par_iter()
            .map(|s| evaluate_sample(s, predictions.records.get(&s.id), mode, masks))
            .collect::<Result<_, _>>()
    })?;

    let known: HashSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    let mut unknown: Vec<&str> = predictions
        .records
        .keys()
        .map(String::as_str)
        .filter(|id| !known.contains(id))
        .collect();
    unknown.sort_unstable();

    let mut warnings: Vec<String> = predictions.malformed.clone();
    warnings.extend(predictions.duplicates.iter().cloned());
    warnings.extend(
        unknown
            .iter()
            .map(|id| format!("prediction for unknown sample `{id}` ignored")),
    );
    let metadata = RunMetadata {
        tool_version: TOOL_VERSION.to_string(),
        mode,
        manifest_sha256: manifest_sha256.to_string(),
        predictions_sha256: predictions.sha256.clone(),
        dice_binding_failure_policy: DICE_BINDING_POLICY.to_string(),
        loss_weights,
        n_predictions: predictions.records.len() as u64,
        n_malformed_lines: predictions.malformed.len() as u64,
        n_duplicate_predictions: predictions.duplicates.len() as u64,
        n_unknown_predictions: unknown.len() as u64,
        warnings,
    };
    let report = aggregate(&verdicts, samples, metadata)?;
    Ok(RunOutcome { report, verdicts })
}

/// Reads predictions from disk and evaluates them against a VQA-Seg manifest.
pub fn evaluate_run(
    manifest: &LoadedManifest,
    predictions_path: &Path,
    mode: EvalMode,
    parallelism: usize,
    templates: &Templates,
) -> Result<RunOutcome, EvalError> {
    manifest.manifest.check_unique_ids()?;
    let samples = manifest.manifest.vqaseg_samples(templates)?;
    let predictions = read_predictions(predictions_path)?;
    let masks = FsMasks::new(&manifest.base_dir);
    evaluate_records(
        &samples,
        &predictions,
        mode,
        parallelism,
        &masks,
        &manifest.sha256,
        LossWeights::default(),
    )
}
