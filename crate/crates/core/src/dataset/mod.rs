//! Source annotations, rendered task samples, and the manifest file format.
//!
//! A manifest is UTF-8 JSON with snake_case fields; unknown fields are
//! ignored on read. Paths inside it are relative to the manifest directory.

mod render;
mod split;
mod stats;
mod validate;

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use render::{
    refseg_id, render_answer_with_label, render_gt_answer, render_refseg_sample,
    render_vqaseg_sample, RenderError,
};
pub use split::{split_by_volume, SplitError, SplitOutcome, SPLIT_SLACK};
pub use stats::{compute_label_distribution, LabelDistribution, NEGATIVE_LABEL};
pub use validate::{validate_manifest, Finding as ValidationFinding, FindingKind, ValidationReport};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "XRAY", alias = "X-RAY", alias = "XRay", alias = "X-ray")]
    XRay,
    #[serde(rename = "CT")]
    Ct,
    #[serde(rename = "MRI")]
    Mri,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::XRay, Modality::Ct, Modality::Mri];

    /// Name used inside prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            Modality::XRay => "X-ray",
            Modality::Ct => "CT",
            Modality::Mri => "MRI",
        }
    }

    /// Name stored in manifests and reports.
    pub fn code(self) -> &'static str {
        match self {
            Modality::XRay => "XRAY",
            Modality::Ct => "CT",
            Modality::Mri => "MRI",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Organ,
    Abnormality,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegTarget {
    pub name: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    pub mask_path: PathBuf,
    pub kind: TargetKind,
}

impl SegTarget {
    pub fn new(
        name: impl Into<String>,
        synonyms: impl IntoIterator<Item = impl Into<String>>,
        mask_path: impl Into<PathBuf>,
        kind: TargetKind,
    ) -> Self {
        let name = name.into();
        let mut synonyms: Vec<String> = synonyms.into_iter().map(Into::into).collect();
        if !synonyms.contains(&name) {
            synonyms.insert(0, name.clone());
        }
        SegTarget {
            name,
            synonyms,
            mask_path: mask_path.into(),
            kind,
        }
    }

    /// Labels a prompt may use: the synonyms, with the canonical name first
    /// if the list omits it.
    pub fn label_choices(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::with_capacity(self.synonyms.len() + 1);
        if !self.synonyms.iter().any(|s| s == &self.name) {
            out.push(&self.name);
        }
        out.extend(self.synonyms.iter().map(String::as_str));
        out
    }
}

/// Diagnosis label plus accepted alternative spellings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub label: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Finding {
    Negative,
    Positive {
        label: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        synonyms: Vec<String>,
    },
}

impl Finding {
    pub fn positive(label: impl Into<String>) -> Self {
        Finding::Positive {
            label: label.into(),
            synonyms: Vec::new(),
        }
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, Finding::Positive { .. })
    }

    pub fn diagnosis(&self) -> Option<Diagnosis> {
        match self {
            Finding::Negative => None,
            Finding::Positive { label, synonyms } => {
                let mut all = synonyms.clone();
                if !all.contains(label) {
                    all.insert(0, label.clone());
                }
                Some(Diagnosis {
                    label: label.clone(),
                    synonyms: all,
                })
            }
        }
    }

    /// Diagnosis label, or the negative pseudo-label.
    pub fn label(&self) -> &str {
        match self {
            Finding::Negative => NEGATIVE_LABEL,
            Finding::Positive { label, .. } => label,
        }
    }
}

/// One annotated image before task rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub modality: Modality,
    pub finding: Finding,
    #[serde(default)]
    pub targets: Vec<SegTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// A three-step detection / diagnosis / segmentation sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaSegSample {
    pub id: String,
    pub modality: Modality,
    pub image_path: PathBuf,
    pub question_text: String,
    pub gt_detection: bool,
    pub gt_diagnosis: Option<Diagnosis>,
    pub gt_targets: Vec<SegTarget>,
    pub split: Split,
}

/// A referring-segmentation sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefSegSample {
    pub id: String,
    pub image_path: PathBuf,
    pub modality: Modality,
    pub target: SegTarget,
    pub prompt: String,
    pub expected_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerType {
    Closed,
    Open,
}

/// A plain VQA question with its reference answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaPair {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
    pub modality: Modality,
    pub question: String,
    pub answer: String,
    pub answer_type: AnswerType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// A VQA-Seg manifest row: the source record plus its partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaSegEntry {
    #[serde(flatten)]
    pub record: SourceRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    /// Question as rendered at assembly time; re-rendered when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    RefSeg,
    Vqa,
    VqaSeg,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::RefSeg => "ref_seg",
            TaskKind::Vqa => "vqa",
            TaskKind::VqaSeg => "vqa_seg",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifestSamples {
    RefSeg(Vec<RefSegSample>),
    Vqa(Vec<VqaPair>),
    VqaSeg(Vec<VqaSegEntry>),
}

impl ManifestSamples {
    pub fn task_kind(&self) -> TaskKind {
        match self {
            ManifestSamples::RefSeg(_) => TaskKind::RefSeg,
            ManifestSamples::Vqa(_) => TaskKind::Vqa,
            ManifestSamples::VqaSeg(_) => TaskKind::VqaSeg,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ManifestSamples::RefSeg(v) => v.len(),
            ManifestSamples::Vqa(v) => v.len(),
            ManifestSamples::VqaSeg(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<&str> {
        match self {
            ManifestSamples::RefSeg(v) => v.iter().map(|s| s.id.as_str()).collect(),
            ManifestSamples::Vqa(v) => v.iter().map(|s| s.id.as_str()).collect(),
            ManifestSamples::VqaSeg(v) => v.iter().map(|s| s.record.id.as_str()).collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported manifest version {0}")]
    Version(u32),
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("expected a {expected} manifest, found {found}")]
    WrongTask { expected: TaskKind, found: TaskKind },
    #[error("sample `{id}`: {source}")]
    Render {
        id: String,
        #[source]
        source: RenderError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub version: u32,
    pub samples: ManifestSamples,
    pub stats: Option<LabelDistribution>,
}

#[derive(Serialize, Deserialize)]
struct RawManifest {
    version: u32,
    task_kind: TaskKind,
    samples: Vec<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stats: Option<LabelDistribution>,
}

fn parse_rows<T: serde::de::DeserializeOwned>(
    rows: Vec<serde_json::Value>,
) -> Result<Vec<T>, serde_json::Error> {
    rows.into_iter().map(serde_json::from_value).collect()
}

fn to_rows<T: Serialize>(rows: &[T]) -> Vec<serde_json::Value> {
    rows.iter()
        .map(|r| serde_json::to_value(r).expect("manifest rows serialize"))
        .collect()
}

impl DatasetManifest {
    pub fn new(samples: ManifestSamples) -> Self {
        let mut m = DatasetManifest {
            version: MANIFEST_VERSION,
            samples,
            stats: None,
        };
        m.stats = Some(compute_label_distribution(&m));
        m
    }

    pub fn task_kind(&self) -> TaskKind {
        self.samples.task_kind()
    }

    /// Parses and checks the version; id uniqueness is left to
    /// [`DatasetManifest::check_unique_ids`] so validation can report it.
    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        let raw: RawManifest = serde_json::from_str(text)?;
        if raw.version != MANIFEST_VERSION {
            return Err(ManifestError::Version(raw.version));
        }
        let samples = match raw.task_kind {
            TaskKind::RefSeg => ManifestSamples::RefSeg(parse_rows(raw.samples)?),
            TaskKind::Vqa => ManifestSamples::Vqa(parse_rows(raw.samples)?),
            TaskKind::VqaSeg => ManifestSamples::VqaSeg(parse_rows(raw.samples)?),
        };
        Ok(DatasetManifest {
            version: raw.version,
            samples,
            stats: raw.stats,
        })
    }

    pub fn to_json_pretty(&self) -> String {
        let samples = match &self.samples {
            ManifestSamples::RefSeg(v) => to_rows(v),
            ManifestSamples::Vqa(v) => to_rows(v),
            ManifestSamples::VqaSeg(v) => to_rows(v),
        };
        let raw = RawManifest {
            version: self.version,
            task_kind: self.task_kind(),
            samples,
            stats: self.stats.clone(),
        };
        let mut s = serde_json::to_string_pretty(&raw).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn duplicate_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut dups: Vec<String> = self
            .samples
            .ids()
            .into_iter()
            .filter(|id| !seen.insert(*id))
            .map(str::to_string)
            .collect();
        dups.sort();
        dups.dedup();
        dups
    }

    pub fn check_unique_ids(&self) -> Result<(), ManifestError> {
        match self.duplicate_ids().into_iter().next() {
            Some(id) => Err(ManifestError::DuplicateId(id)),
            None => Ok(()),
        }
    }

    pub fn vqaseg_entries(&self) -> Result<&[VqaSegEntry], ManifestError> {
        match &self.samples {
            ManifestSamples::VqaSeg(v) => Ok(v),
            other => Err(ManifestError::WrongTask {
                expected: TaskKind::VqaSeg,
                found: other.task_kind(),
            }),
        }
    }

    pub fn vqa_pairs(&self) -> Result<&[VqaPair], ManifestError> {
        match &self.samples {
            ManifestSamples::Vqa(v) => Ok(v),
            other => Err(ManifestError::WrongTask {
                expected: TaskKind::Vqa,
                found: other.task_kind(),
            }),
        }
    }

    /// Renders every VQA-Seg row into an evaluable sample.
    pub fn vqaseg_samples(
        &self,
        templates: &crate::templates::Templates,
    ) -> Result<Vec<VqaSegSample>, ManifestError> {
        self.vqaseg_entries()?
            .iter()
            .map(|e| {
                let mut s = render_vqaseg_sample(&e.record, templates).map_err(|source| {
                    ManifestError::Render {
                        id: e.record.id.clone(),
                        source,
                    }
                })?;
                s.split = e.split.unwrap_or(Split::Test);
                if let Some(q) = &e.question {
                    s.question_text = q.clone();
                }
                Ok(s)
            })
            .collect()
    }
}

/// A manifest together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: DatasetManifest,
    pub path: PathBuf,
    pub base_dir: PathBuf,
    pub sha256: String,
}

impl LoadedManifest {
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let bytes = std::fs::read(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let text = String::from_utf8(bytes.clone()).map_err(|e| ManifestError::Io {
            path: path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })?;
        let manifest = DatasetManifest::from_json(&text)?;
        Ok(LoadedManifest {
            manifest,
            path: path.to_path_buf(),
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            sha256: crate::hashing::sha256_hex(&bytes),
        })
    }

    pub fn from_manifest(manifest: DatasetManifest, base_dir: impl Into<PathBuf>) -> Self {
        let sha256 = crate::hashing::sha256_hex(manifest.to_json_pretty().as_bytes());
        LoadedManifest {
            manifest,
            path: PathBuf::new(),
            base_dir: base_dir.into(),
            sha256,
        }
    }

    /// Resolves a manifest-relative path.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
      "version": 1,
      "task_kind": "vqa_seg",
      "future_field": {"ignored": true},
      "samples": [
        {"id": "a", "image_path": "img/a.png", "modality": "XRAY",
         "finding": {"type": "positive", "label": "COVID-19"},
         "targets": [
           {"name": "lungs", "synonyms": ["lungs", "lung fields"], "mask_path": "m/a_l.png", "kind": "organ"},
           {"name": "COVID-19 infection", "synonyms": [], "mask_path": "m/a_c.png", "kind": "abnormality"}
         ],
         "split": "test", "extra": 3},
        {"id": "b", "image_path": "img/b.png", "modality": "CT",
         "finding": {"type": "negative"}, "targets": [], "volume_id": "v1", "split": "train"}
      ]
    }"#;

    #[test]
    fn parses_documented_format() {
        let m = DatasetManifest::from_json(SAMPLE).unwrap();
        assert_eq!(m.task_kind(), TaskKind::VqaSeg);
        let rows = m.vqaseg_entries().unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].record.modality, Modality::XRay);
        assert_eq!(rows[0].record.finding, Finding::positive("COVID-19"));
        assert_eq!(rows[0].split, Some(Split::Test));
        assert_eq!(rows[1].record.volume_id.as_deref(), Some("v1"));
        assert_eq!(m.duplicate_ids(), Vec::<String>::new());
    }

    #[test]
    fn json_roundtrip() {
        let m = DatasetManifest::from_json(SAMPLE).unwrap();
        let again = DatasetManifest::from_json(&m.to_json_pretty()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn version_and_task_errors() {
        let bad = SAMPLE.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(DatasetManifest::from_json(&bad), Err(ManifestError::Version(2))));
        let m = DatasetManifest::from_json(SAMPLE).unwrap();
        assert!(matches!(m.vqa_pairs(), Err(ManifestError::WrongTask { .. })));
    }

    #[test]
    fn duplicate_ids_detected() {
        let dup = SAMPLE.replace("\"id\": \"b\"", "\"id\": \"a\"");
        let m = DatasetManifest::from_json(&dup).unwrap();
        assert_eq!(m.duplicate_ids(), vec!["a".to_string()]);
        assert!(matches!(m.check_unique_ids(), Err(ManifestError::DuplicateId(_))));
    }

    #[test]
    fn modality_names() {
        assert_eq!(serde_json::to_string(&Modality::XRay).unwrap(), "\"XRAY\"");
        assert_eq!(Modality::XRay.display_name(), "X-ray");
        assert_eq!(Modality::Mri.display_name(), "MRI");
        let m: Modality = serde_json::from_str("\"X-ray\"").unwrap();
        assert_eq!(m, Modality::XRay);
    }

    #[test]
    fn seg_target_new_includes_name() {
        let t = SegTarget::new("liver", ["hepatic organ"], "m.png", TargetKind::Organ);
        assert_eq!(t.synonyms, vec!["liver", "hepatic organ"]);
        let raw = SegTarget {
            synonyms: vec![],
            ..t.clone()
        };
        assert_eq!(raw.label_choices(), vec!["liver"]);
    }
}
