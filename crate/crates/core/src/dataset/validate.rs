//! File-level and record-level manifest checks.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    render_vqaseg_sample, LoadedManifest, ManifestError, ManifestSamples, SegTarget, SourceRecord,
};
use crate::answer::tokenize_seg_tokens;
use crate::mask_io::{load_mask, DEFAULT_THRESHOLD};
use crate::templates::Templates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    DuplicateId,
    MissingFile,
    UnreadableImage,
    UnreadableMask,
    DimensionMismatch,
    InvalidRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Finding {
    pub sample_id: String,
    pub kind: FindingKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_samples: usize,
    pub strict: bool,
    /// Sorted by sample id, then kind, then detail.
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn is_fatal(&self) -> bool {
        self.strict && !self.is_clean()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} samples, {} findings{}\n",
            self.n_samples,
            self.findings.len(),
            if self.is_fatal() { " (strict: fatal)" } else { "" }
        );
        for f in &self.findings {
            let kind = serde_json::to_value(f.kind).unwrap();
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                f.sample_id,
                kind.as_str().unwrap_or("?"),
                f.detail
            ));
        }
        out
    }
}

pub fn validate_manifest(path: &Path, strict: bool) -> Result<ValidationReport, ManifestError> {
    let loaded = LoadedManifest::load(path)?;
    Ok(validate_loaded(&loaded, strict))
}

struct Ctx<'a> {
    loaded: &'a LoadedManifest,
    id: &'a str,
    out: Vec<Finding>,
}

impl Ctx<'_> {
    fn push(&mut self, kind: FindingKind, detail: impl Into<String>) {
        self.out.push(Finding {
            sample_id: self.id.to_string(),
            kind,
            detail: detail.into(),
        });
    }

    fn image_dims(&mut self, rel: &Path) -> Option<(u32, u32)> {
        let path = self.loaded.resolve(rel);
        if !path.exists() {
            self.push(FindingKind::MissingFile, format!("image {}", rel.display()));
            return None;
        }
        match image::image_dimensions(&path) {
            Ok(d) => Some(d),
            Err(e) => {
                self.push(FindingKind::UnreadableImage, format!("{}: {e}", rel.display()));
                None
            }
        }
    }

    fn target(&mut self, t: &SegTarget, image: Option<(u32, u32)>) {
        if t.name.trim().is_empty() {
            self.push(FindingKind::InvalidRecord, "target with empty name");
        } else if !t.synonyms.is_empty() && !t.synonyms.contains(&t.name) {
            self.push(
                FindingKind::InvalidRecord,
                format!("synonyms of `{}` do not contain the name", t.name),
            );
        }
        let path = self.loaded.resolve(&t.mask_path);
        if !path.exists() {
            self.push(FindingKind::MissingFile, format!("mask {}", t.mask_path.display()));
            return;
        }
        match load_mask(&path, DEFAULT_THRESHOLD) {
            Ok(m) => {
                if let Some((w, h)) = image {
                    if m.dims() != (w, h) {
                        self.push(
                            FindingKind::DimensionMismatch,
                            format!(
                                "mask {} is {}x{}, image is {w}x{h}",
                                t.mask_path.display(),
                                m.width(),
                                m.height()
                            ),
                        );
                    }
                }
            }
            Err(e) => self.push(FindingKind::UnreadableMask, e.to_string()),
        }
    }

    fn record(&mut self, r: &SourceRecord, templates: &Templates) {
        let dims = self.image_dims(&r.image_path);
        if r.finding.is_positive() && r.targets.is_empty() {
            self.push(FindingKind::InvalidRecord, "positive finding without targets");
        }
        if !r.finding.is_positive() && !r.targets.is_empty() {
            self.push(
                FindingKind::InvalidRecord,
                "negative finding lists targets; they are ignored for VQA-Seg",
            );
        }
        if r.finding.is_positive() && !r.targets.is_empty() {
            if let Err(e) = render_vqaseg_sample(r, templates) {
                self.push(FindingKind::InvalidRecord, e.to_string());
            }
        }
        for t in &r.targets {
            self.target(t, dims);
        }
    }
}

pub fn validate_loaded(loaded: &LoadedManifest, strict: bool) -> ValidationReport {
    let templates = Templates::default();
    let manifest = &loaded.manifest;
    let mut findings: Vec<Finding> = manifest
        .duplicate_ids()
        .into_iter()
        .map(|id| Finding {
            detail: format!("id `{id}` appears more than once"),
            sample_id: id,
            kind: FindingKind::DuplicateId,
        })
        .collect();

    let per_row: Vec<Vec<Finding>> = match &manifest.samples {
        ManifestSamples::VqaSeg(rows) => rows
            .par_iter()
            .map(|row| {
                let mut ctx = Ctx {
                    loaded,
                    id: &row.record.id,
                    out: Vec::new(),
                };
                ctx.record(&row.record, &templates);
                ctx.out
            })
            .collect(),
        ManifestSamples::RefSeg(rows) => rows
            .par_iter()
            .map(|row| {
                let mut ctx = Ctx {
                    loaded,
                    id: &row.id,
                    out: Vec::new(),
                };
                let dims = ctx.image_dims(&row.image_path);
                ctx.target(&row.target, dims);
                let n = tokenize_seg_tokens(&row.expected_answer).len();
                if n != 1 {
                    ctx.push(
                        FindingKind::InvalidRecord,
                        format!("expected answer has {n} seg tokens"),
                    );
                }
                ctx.out
            })
            .collect(),
        ManifestSamples::Vqa(rows) => rows
            .par_iter()
            .map(|row| {
                let mut ctx = Ctx {
                    loaded,
                    id: &row.id,
                    out: Vec::new(),
                };
                if let Some(p) = &row.image_path {
                    ctx.image_dims(p);
                }
                if row.question.trim().is_empty() || row.answer.trim().is_empty() {
                    ctx.push(FindingKind::InvalidRecord, "empty question or answer");
                }
                ctx.out
            })
            .collect(),
    };
    findings.extend(per_row.into_iter().flatten());
    findings.sort();
    ValidationReport {
        n_samples: manifest.samples.len(),
        strict,
        findings,
    }
}
