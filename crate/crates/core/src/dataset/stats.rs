//! Per-(modality, label) sample counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnswerType, DatasetManifest, ManifestSamples, Modality};

/// Pseudo-label counted for samples without a finding.
pub const NEGATIVE_LABEL: &str = "negative";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub counts: BTreeMap<Modality, BTreeMap<String, u64>>,
}

impl LabelDistribution {
    pub fn add(&mut self, modality: Modality, label: &str) {
        *self
            .counts
            .entry(modality)
            .or_default()
            .entry(label.to_string())
            .or_default() += 1;
    }

    pub fn get(&self, modality: Modality, label: &str) -> u64 {
        self.counts
            .get(&modality)
            .and_then(|m| m.get(label))
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().flat_map(|m| m.values()).sum()
    }

    /// `modality  label  count` lines, sorted.
    pub fn to_table(&self) -> String {
        let mut rows = vec![("Modality".to_string(), "Label".to_string(), "Count".to_string())];
        for (m, labels) in &self.counts {
            for (label, n) in labels {
                rows.push((m.code().to_string(), label.clone(), n.to_string()));
            }
        }
        rows.push(("TOTAL".into(), String::new(), self.total().to_string()));
        let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
        let w2 = rows.iter().map(|r| r.2.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(a, b, c)| format!("{a:<w0$}  {b:<w1$}  {c:>w2$}\n"))
            .collect()
    }
}

/// Counts samples by modality and label.
///
/// VQA-Seg rows count their diagnosis (or `negative`), Ref-Seg rows their
/// canonical target name, VQA rows their answer type.
pub fn compute_label_distribution(manifest: &DatasetManifest) -> LabelDistribution {
    let mut d = LabelDistribution::default();
    match &manifest.samples {
        ManifestSamples::VqaSeg(rows) => {
            for r in rows {
                d.add(r.record.modality, r.record.finding.label());
            }
        }
        ManifestSamples::RefSeg(rows) => {
            for r in rows {
                d.add(r.modality, &r.target.name);
            }
        }
        ManifestSamples::Vqa(rows) => {
            for r in rows {
                let label = match r.answer_type {
                    AnswerType::Closed => "closed",
                    AnswerType::Open => "open",
                };
                d.add(r.modality, label);
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Finding, SourceRecord, VqaSegEntry};

    fn entry(id: usize, modality: Modality, finding: Finding) -> VqaSegEntry {
        VqaSegEntry {
            record: SourceRecord {
                id: id.to_string(),
                image_path: "i.png".into(),
                modality,
                finding,
                targets: vec![],
                volume_id: None,
            },
            split: None,
            question: None,
        }
    }

    #[test]
    fn empty_manifest() {
        let m = DatasetManifest::new(ManifestSamples::VqaSeg(vec![]));
        let d = compute_label_distribution(&m);
        assert_eq!(d.total(), 0);
        assert_eq!(d.get(Modality::XRay, NEGATIVE_LABEL), 0);
    }

    #[test]
    fn covid_counts() {
        let mut rows: Vec<_> = (0..3)
            .map(|i| entry(i, Modality::XRay, Finding::positive("COVID-19")))
            .collect();
        rows.extend((3..5).map(|i| entry(i, Modality::XRay, Finding::Negative)));
        let d = compute_label_distribution(&DatasetManifest::new(ManifestSamples::VqaSeg(rows)));
        let mut expected = BTreeMap::new();
        expected.insert("COVID-19".to_string(), 3);
        expected.insert(NEGATIVE_LABEL.to_string(), 2);
        assert_eq!(d.counts.len(), 1);
        assert_eq!(d.counts[&Modality::XRay], expected);
        assert_eq!(d.total(), 5);
        assert!(d.to_table().contains("COVID-19"));
    }

    #[test]
    fn serializes_with_modality_keys() {
        let mut d = LabelDistribution::default();
        d.add(Modality::Ct, "liver tumor");
        assert_eq!(
            serde_json::to_string(&d).unwrap(),
            r#"{"counts":{"CT":{"liver tumor":1}}}"#
        );
    }
}
