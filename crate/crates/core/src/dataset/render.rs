use rand::Rng;
use thiserror::Error;

use super::{RefSegSample, SegTarget, SourceRecord, Split, TargetKind, VqaSegSample};
use crate::rng::keyed_rng;
use crate::templates::{fill, seg_token, TemplateError, Templates};

const SYNONYM_DOMAIN: &str = "refseg-synonym";

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("target index {index} out of range for {len} targets")]
    TargetIndex { index: usize, len: usize },
    #[error("positive record has no organ target")]
    MissingOrgan,
    #[error("positive record has no abnormality target")]
    MissingAbnormality,
    #[error("organ targets must precede abnormality targets")]
    TargetOrder,
    #[error("target has an empty name")]
    EmptyName,
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Ref-Seg sample id for the `target_index`-th target of a record.
pub fn refseg_id(record_id: &str, target_index: usize) -> String {
    format!("{record_id}#{target_index}")
}

/// Renders the referring-segmentation prompt for one target.
///
/// The label is drawn uniformly from the target's synonyms with a stream
/// keyed by `(seed, sample id)`.
pub fn render_refseg_sample(
    record: &SourceRecord,
    target_index: usize,
    seed: u64,
    templates: &Templates,
) -> Result<RefSegSample, RenderError> {
    let target = record
        .targets
        .get(target_index)
        .ok_or(RenderError::TargetIndex {
            index: target_index,
            len: record.targets.len(),
        })?;
    if target.name.trim().is_empty() {
        return Err(RenderError::EmptyName);
    }
    let id = refseg_id(&record.id, target_index);
    let choices = target.label_choices();
    let pick = keyed_rng(SYNONYM_DOMAIN, seed, &id).gen_range(0..choices.len());
    let label = choices[pick];
    let modality = record.modality.display_name();
    let token = seg_token(0);
    Ok(RefSegSample {
        prompt: fill(
            &templates.refseg_prompt,
            &[("label", label), ("modality", modality)],
        ),
        expected_answer: fill(
            &templates.refseg_answer,
            &[("label", label), ("token", &token)],
        ),
        id,
        image_path: record.image_path.clone(),
        modality: record.modality,
        target: target.clone(),
        volume_id: record.volume_id.clone(),
        split: None,
    })
}

fn check_positive_targets(targets: &[SegTarget]) -> Result<(), RenderError> {
    if targets.iter().any(|t| t.name.trim().is_empty()) {
        return Err(RenderError::EmptyName);
    }
    let first_abn = targets
        .iter()
        .position(|t| t.kind == TargetKind::Abnormality)
        .ok_or(RenderError::MissingAbnormality)?;
    if !targets.iter().any(|t| t.kind == TargetKind::Organ) {
        return Err(RenderError::MissingOrgan);
    }
    if targets[first_abn..].iter().any(|t| t.kind == TargetKind::Organ) {
        return Err(RenderError::TargetOrder);
    }
    Ok(())
}

/// Renders the three-step question and ground truth for one record.
///
/// Negative records carry no diagnosis and no targets, whatever masks the
/// source annotation lists.
pub fn render_vqaseg_sample(
    record: &SourceRecord,
    templates: &Templates,
) -> Result<VqaSegSample, RenderError> {
    let question_text = fill(
        &templates.vqaseg_question,
        &[("modality", record.modality.display_name())],
    );
    let diagnosis = record.finding.diagnosis();
    let gt_targets = if diagnosis.is_some() {
        check_positive_targets(&record.targets)?;
        templates.check_vocab(record.targets.len())?;
        record.targets.clone()
    } else {
        Vec::new()
    };
    Ok(VqaSegSample {
        id: record.id.clone(),
        modality: record.modality,
        image_path: record.image_path.clone(),
        question_text,
        gt_detection: diagnosis.is_some(),
        gt_diagnosis: diagnosis,
        gt_targets,
        split: Split::Train,
    })
}

/// The reference answer text: one numbered seg token per target, in order.
pub fn render_gt_answer(sample: &VqaSegSample, templates: &Templates) -> String {
    render_answer_with_label(sample, None, templates)
}

/// Like [`render_gt_answer`], optionally replacing the diagnosis label.
pub fn render_answer_with_label(
    sample: &VqaSegSample,
    label_override: Option<&str>,
    templates: &Templates,
) -> String {
    let Some(dx) = &sample.gt_diagnosis else {
        return templates.vqaseg_negative_answer.clone();
    };
    let targets: Vec<String> = sample
        .gt_targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            fill(
                &templates.vqaseg_target,
                &[("name", &t.name), ("token", &seg_token(i))],
            )
        })
        .collect();
    fill(
        &templates.vqaseg_positive_answer,
        &[
            ("diagnosis", label_override.unwrap_or(&dx.label)),
            ("targets", &targets.join(&templates.vqaseg_target_separator)),
        ],
    )
}
