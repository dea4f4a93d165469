//! Python bindings: answer parsing, metrics, the RLE codec, rendering,
//! reference predictors and whole-run evaluation.
//!
//! Structured inputs and outputs (records, reports) cross the boundary as
//! JSON strings so the Python side can use plain `json.loads`.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use rds_bench::answer::{match_diagnosis as core_match_diagnosis, tokenize_seg_tokens};
use rds_bench::dataset::{render_gt_answer as core_render_gt_answer, render_refseg_sample, render_vqaseg_sample};
use rds_bench::eval::{evaluate_run as core_evaluate_run, render_report, EvalMode, ReportFormat};
use rds_bench::mask_io;
use rds_bench::metrics;
use rds_bench::predictors::synth::{generate, SynthConfig};
use rds_bench::predictors::{predict_manifest, to_jsonl};
use rds_bench::{
    ConfusionCounts, Detection, LoadedManifest, LossWeights, Modality, PredictorPolicy,
    SourceRecord, Templates, TOOL_VERSION,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn templates(dir: Option<PathBuf>) -> PyResult<Templates> {
    Templates::resolve(dir.as_deref()).map_err(value_err)
}

fn record(json: &str) -> PyResult<SourceRecord> {
    serde_json::from_str(json).map_err(value_err)
}

/// A binary mask stored row-major.
#[pyclass(name = "BinaryMask", module = "rds_bench", frozen)]
struct PyBinaryMask(metrics::BinaryMask);

#[pymethods]
impl PyBinaryMask {
    #[new]
    fn new(width: u32, height: u32, bits: Vec<bool>) -> PyResult<Self> {
        metrics::BinaryMask::new(width, height, bits)
            .map(Self)
            .map_err(value_err)
    }

    /// Builds a mask from a list of rows of truthy values.
    #[staticmethod]
    fn from_rows(rows: Vec<Vec<Bound<'_, PyAny>>>) -> PyResult<Self> {
        let height = rows.len() as u32;
        let width = rows.first().map_or(0, Vec::len) as u32;
        if rows.iter().any(|r| r.len() as u32 != width) {
            return Err(PyValueError::new_err("rows differ in length"));
        }
        let bits = rows
            .iter()
            .flatten()
            .map(|v| v.is_truthy())
            .collect::<PyResult<Vec<bool>>>()?;
        Self::new(width, height, bits)
    }

    #[staticmethod]
    fn from_rle(width: u32, height: u32, runs: Vec<u64>) -> PyResult<Self> {
        mask_io::rle_decode(width, height, &runs)
            .map(Self)
            .map_err(value_err)
    }

    /// Loads a PNG, foreground where the gray level is at least `threshold`.
    #[staticmethod]
    #[pyo3(signature = (path, threshold = mask_io::DEFAULT_THRESHOLD))]
    fn load(path: PathBuf, threshold: u8) -> PyResult<Self> {
        mask_io::load_mask(&path, threshold)
            .map(Self)
            .map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        mask_io::save_mask(&self.0, &path).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn width(&self) -> u32 {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.0.height()
    }

    fn count_ones(&self) -> usize {
        self.0.count_ones()
    }

    fn to_rows(&self) -> Vec<Vec<bool>> {
        self.0
            .bits()
            .chunks(self.0.width() as usize)
            .map(<[bool]>::to_vec)
            .collect()
    }

    fn rle(&self) -> Vec<u64> {
        mask_io::rle_encode(&self.0)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!(
            "BinaryMask(width={}, height={}, ones={})",
            self.0.width(),
            self.0.height(),
            self.0.count_ones()
        )
    }
}

/// The three-step reading of a free-form answer.
#[pyclass(name = "ParsedAnswer", module = "rds_bench", frozen, get_all)]
struct PyParsedAnswer {
    /// "yes", "no" or "invalid".
    detection: String,
    diagnosis_segment: Option<String>,
    seg_tokens: Vec<String>,
}

#[pymethods]
impl PyParsedAnswer {
    fn __repr__(&self) -> String {
        let diagnosis = self
            .diagnosis_segment
            .as_ref()
            .map_or_else(|| "None".to_string(), |d| format!("{d:?}"));
        format!(
            "ParsedAnswer(detection={:?}, diagnosis_segment={diagnosis}, seg_tokens={:?})",
            self.detection, self.seg_tokens
        )
    }
}

#[pyfunction]
fn parse_answer(text: &str) -> PyParsedAnswer {
    let p = rds_bench::ParsedAnswer::parse(text);
    PyParsedAnswer {
        detection: match p.detection {
            Detection::Yes => "yes",
            Detection::No => "no",
            Detection::Invalid => "invalid",
        }
        .to_string(),
        diagnosis_segment: p.diagnosis_segment,
        seg_tokens: p.seg_refs.into_iter().map(|r| r.token_name).collect(),
    }
}

/// `(token_name, ordinal, start, end, preceding_label)` per seg token.
#[pyfunction]
fn tokenize(text: &str) -> Vec<(String, usize, usize, usize, Option<String>)> {
    tokenize_seg_tokens(text)
        .into_iter()
        .map(|r| (r.token_name, r.token_ordinal, r.char_span.0, r.char_span.1, r.preceding_label))
        .collect()
}

#[pyfunction]
#[pyo3(signature = (segment, label, synonyms = Vec::new()))]
fn match_diagnosis(segment: &str, label: &str, synonyms: Vec<String>) -> bool {
    core_match_diagnosis(segment, label, &synonyms)
}

#[pyfunction]
fn dice_score(pred: &PyBinaryMask, gt: &PyBinaryMask) -> PyResult<f64> {
    metrics::dice_score(&pred.0, &gt.0).map_err(value_err)
}

fn prob_mask(probs: Vec<f64>, gt: &PyBinaryMask) -> PyResult<metrics::ProbMask> {
    metrics::ProbMask::new(gt.0.width(), gt.0.height(), probs).map_err(value_err)
}

fn weights(text: f64, seg: f64, bce: f64, dice: f64) -> LossWeights {
    LossWeights {
        lambda_text: text,
        lambda_seg: seg,
        lambda_bce: bce,
        lambda_dice: dice,
    }
}

/// Mean clamped BCE of row-major probabilities against `gt`.
#[pyfunction]
fn bce_pixel_loss(probs: Vec<f64>, gt: &PyBinaryMask) -> PyResult<f64> {
    metrics::bce_pixel_loss(&prob_mask(probs, gt)?, &gt.0).map_err(value_err)
}

#[pyfunction]
fn dice_loss(probs: Vec<f64>, gt: &PyBinaryMask) -> PyResult<f64> {
    metrics::dice_loss(&prob_mask(probs, gt)?, &gt.0).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (probs, gt, lambda_bce = 2.0, lambda_dice = 0.5))]
fn seg_loss(probs: Vec<f64>, gt: &PyBinaryMask, lambda_bce: f64, lambda_dice: f64) -> PyResult<f64> {
    let w = weights(1.0, 1.0, lambda_bce, lambda_dice);
    metrics::seg_loss(&prob_mask(probs, gt)?, &gt.0, &w).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (l_text, l_seg, lambda_text = 1.0, lambda_seg = 1.0))]
fn total_loss(l_text: f64, l_seg: f64, lambda_text: f64, lambda_seg: f64) -> PyResult<f64> {
    let w = weights(lambda_text, lambda_seg, 2.0, 0.5);
    metrics::total_loss(l_text, l_seg, &w).map_err(value_err)
}

/// `(precision, recall, f1)` with 0/0 taken as 0.
#[pyfunction]
#[pyo3(signature = (tp, fp, fn_, tn = 0))]
fn precision_recall_f1(tp: u64, fp: u64, fn_: u64, tn: u64) -> (f64, f64, f64) {
    let r = metrics::precision_recall_f1(&ConfusionCounts::new(tp, fp, fn_, tn));
    (r.precision, r.recall, r.f1)
}

#[pyfunction]
fn diagnosis_f1(indicators: Vec<u8>) -> PyResult<f64> {
    metrics::diagnosis_f1(&indicators).map_err(value_err)
}

/// `(exact_acc, token_recall)` for an open-ended answer.
#[pyfunction]
fn open_q_scores(gt_answer: &str, pred_answer: &str) -> PyResult<(u8, f64)> {
    metrics::open_q_scores(gt_answer, pred_answer)
        .map(|s| (s.exact_acc, s.token_recall))
        .map_err(value_err)
}

/// Ref-Seg rendering of one target of a JSON source record; returns JSON.
#[pyfunction]
#[pyo3(signature = (record_json, target_index = 0, seed = 0, templates_dir = None))]
fn render_refseg(
    record_json: &str,
    target_index: usize,
    seed: u64,
    templates_dir: Option<PathBuf>,
) -> PyResult<String> {
    let t = templates(templates_dir)?;
    let s = render_refseg_sample(&record(record_json)?, target_index, seed, &t).map_err(value_err)?;
    serde_json::to_string(&s).map_err(value_err)
}

/// VQA-Seg rendering of a JSON source record; returns JSON.
#[pyfunction]
#[pyo3(signature = (record_json, templates_dir = None))]
fn render_vqaseg(record_json: &str, templates_dir: Option<PathBuf>) -> PyResult<String> {
    let t = templates(templates_dir)?;
    let s = render_vqaseg_sample(&record(record_json)?, &t).map_err(value_err)?;
    serde_json::to_string(&s).map_err(value_err)
}

/// The reference answer text for a JSON source record.
#[pyfunction]
#[pyo3(signature = (record_json, templates_dir = None))]
fn render_gt_answer(record_json: &str, templates_dir: Option<PathBuf>) -> PyResult<String> {
    let t = templates(templates_dir)?;
    let s = render_vqaseg_sample(&record(record_json)?, &t).map_err(value_err)?;
    Ok(core_render_gt_answer(&s, &t))
}

fn load(manifest: &Path) -> PyResult<LoadedManifest> {
    LoadedManifest::load(manifest).map_err(|e| PyIOError::new_err(e.to_string()))
}

/// Predictions of a reference policy for a VQA-Seg manifest, as JSONL.
#[pyfunction]
#[pyo3(signature = (manifest, policy = "oracle", seed = 0, templates_dir = None))]
fn predict(manifest: PathBuf, policy: &str, seed: u64, templates_dir: Option<PathBuf>) -> PyResult<String> {
    let t = templates(templates_dir)?;
    let policy = PredictorPolicy::parse(policy, seed).map_err(PyValueError::new_err)?;
    let records = predict_manifest(&load(&manifest)?, &policy, &t).map_err(value_err)?;
    Ok(to_jsonl(&records))
}

/// Scores a prediction file; returns the report rendered as `emit`.
#[pyfunction]
#[pyo3(signature = (manifest, predictions, mode = "full", jobs = 1, emit = "json", templates_dir = None))]
fn evaluate_run(
    py: Python<'_>,
    manifest: PathBuf,
    predictions: PathBuf,
    mode: &str,
    jobs: usize,
    emit: &str,
    templates_dir: Option<PathBuf>,
) -> PyResult<String> {
    let mode: EvalMode = mode.parse().map_err(PyValueError::new_err)?;
    let format: ReportFormat = emit.parse().map_err(PyValueError::new_err)?;
    let t = templates(templates_dir)?;
    let loaded = load(&manifest)?;
    let outcome = py
        .detach(|| core_evaluate_run(&loaded, &predictions, mode, jobs, &t))
        .map_err(value_err)?;
    Ok(render_report(&outcome.report, format))
}

/// Writes a synthetic VQA-Seg dataset under `out_dir`; returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, samples = 40, width = 64, height = 64, seed = 0, positive_fraction = 0.5, modalities = vec!["XRAY".to_string(), "CT".to_string()]))]
fn synth(
    out_dir: PathBuf,
    samples: usize,
    width: u32,
    height: u32,
    seed: u64,
    positive_fraction: f64,
    modalities: Vec<String>,
) -> PyResult<PathBuf> {
    let modalities = modalities
        .iter()
        .map(|m| serde_json::from_value::<Modality>(serde_json::Value::String(m.to_uppercase())))
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_err)?;
    let ds = generate(&SynthConfig {
        n_samples: samples,
        width,
        height,
        seed,
        positive_fraction,
        modalities,
        ..SynthConfig::default()
    })
    .map_err(value_err)?;
    ds.write(&out_dir).map_err(|e| PyIOError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "rds_bench")]
fn rds_bench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("TOOL_VERSION", TOOL_VERSION)?;
    m.add_class::<PyBinaryMask>()?;
    m.add_class::<PyParsedAnswer>()?;
    m.add_function(wrap_pyfunction!(parse_answer, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(match_diagnosis, m)?)?;
    m.add_function(wrap_pyfunction!(dice_score, m)?)?;
    m.add_function(wrap_pyfunction!(bce_pixel_loss, m)?)?;
    m.add_function(wrap_pyfunction!(dice_loss, m)?)?;
    m.add_function(wrap_pyfunction!(seg_loss, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(precision_recall_f1, m)?)?;
    m.add_function(wrap_pyfunction!(diagnosis_f1, m)?)?;
    m.add_function(wrap_pyfunction!(open_q_scores, m)?)?;
    m.add_function(wrap_pyfunction!(render_refseg, m)?)?;
    m.add_function(wrap_pyfunction!(render_vqaseg, m)?)?;
    m.add_function(wrap_pyfunction!(render_gt_answer, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_run, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    Ok(())
}
