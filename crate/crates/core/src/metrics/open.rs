//! Open-ended answer scores: normalized exact match and token recall.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenScores {
    pub exact_acc: u8,
    pub token_recall: f64,
}

/// Lowercase, punctuation removed, whitespace collapsed.
pub fn normalize_answer(text: &str) -> String {
    let stripped: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect::<String>()
        .to_lowercase();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn open_q_scores(gt_answer: &str, pred_answer: &str) -> Result<OpenScores, MetricError> {
    let gt = normalize_answer(gt_answer);
    if gt.is_empty() {
        return Err(MetricError::EmptyGroundTruth);
    }
    let pred = normalize_answer(pred_answer);
    let mut available: HashMap<&str, usize> = HashMap::new();
    for tok in pred.split(' ').filter(|t| !t.is_empty()) {
        *available.entry(tok).or_default() += 1;
    }
    let gt_tokens: Vec<&str> = gt.split(' ').collect();
    let mut hit = 0usize;
    for tok in &gt_tokens {
        if let Some(n) = available.get_mut(tok) {
            if *n > 0 {
                *n -= 1;
                hit += 1;
            }
        }
    }
    Ok(OpenScores {
        exact_acc: (gt == pred) as u8,
        token_recall: hit as f64 / gt_tokens.len() as f64,
    })
}
