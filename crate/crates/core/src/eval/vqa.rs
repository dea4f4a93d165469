//! Plain VQA scoring: closed yes/no questions by F1, open ones by
//! normalized exact match and token recall.

use serde::{Deserialize, Serialize};

use super::PredictionSet;
use crate::answer::parse_detection;
use crate::dataset::{AnswerType, VqaPair};
use crate::metrics::sum::pairwise_sum_slice;
use crate::metrics::{normalize_answer, open_q_scores, precision_recall_f1, ConfusionCounts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedScores {
    pub n: u64,
    pub confusion: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenScoresSummary {
    pub n: u64,
    pub exact_acc: f64,
    pub token_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaReport {
    pub f1: f64,
    pub recall: f64,
    pub openq_acc: f64,
    pub openq_recall: f64,
    pub closed: ClosedScores,
    pub open: OpenScoresSummary,
    pub n_missing_predictions: u64,
    /// Closed questions whose reference is not yes/no, scored as open.
    pub n_closed_rerouted: u64,
}

fn binary_truth(answer: &str) -> Option<bool> {
    match normalize_answer(answer).as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        pairwise_sum_slice(v) / v.len() as f64
    }
}

/// Scores VQA pairs in the given order. Missing predictions count as empty
/// answers; pairs with an empty reference answer are skipped.
pub fn evaluate_vqa(pairs: &[VqaPair], predictions: &PredictionSet) -> VqaReport {
    let mut confusion = ConfusionCounts::default();
    let mut closed_correct = 0u64;
    let mut exact = Vec::new();
    let mut recall = Vec::new();
    let mut missing = 0u64;
    let mut rerouted = 0u64;
    for pair in pairs {
        let answer = match predictions.records.get(&pair.id) {
            Some(p) => p.answer.as_str(),
            None => {
                missing += 1;
                ""
            }
        };
        let truth = match pair.answer_type {
            AnswerType::Closed => {
                let t = binary_truth(&pair.answer);
                rerouted += t.is_none() as u64;
                t
            }
            AnswerType::Open => None,
        };
        match truth {
            Some(t) => {
                let verdict = parse_detection(answer);
                confusion.add_detection(t, verdict);
                closed_correct += verdict.matches(t) as u64;
            }
            None => {
                if let Ok(s) = open_q_scores(&pair.answer, answer) {
                    exact.push(s.exact_acc as f64);
                    recall.push(s.token_recall);
                }
            }
        }
    }
    let prf = precision_recall_f1(&confusion);
    let n_closed = confusion.total();
    let closed = ClosedScores {
        n: n_closed,
        confusion,
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        accuracy: if n_closed == 0 {
            0.0
        } else {
            closed_correct as f64 / n_closed as f64
        },
    };
    let open = OpenScoresSummary {
        n: exact.len() as u64,
        exact_acc: mean(&exact),
        token_recall: mean(&recall),
    };
    VqaReport {
        f1: closed.f1,
        recall: closed.recall,
        openq_acc: open.exact_acc,
        openq_recall: open.token_recall,
        closed,
        open,
        n_missing_predictions: missing,
        n_closed_rerouted: rerouted,
    }
}

impl VqaReport {
    pub fn to_text(&self) -> String {
        format!(
            "{:<8} {:>5} {:>8} {:>8}\n{:<8} {:>5} {:>8.4} {:>8.4}\n{:<8} {:>5} {:>8.4} {:>8.4}\n",
            "Type", "N", "Score", "Recall",
            "Closed", self.closed.n, self.f1, self.recall,
            "Open", self.open.n, self.openq_acc, self.openq_recall,
        )
    }

    pub fn to_csv(&self) -> String {
        format!(
            "f1,recall,openq_acc,openq_recall,n_closed,n_open,n_missing\n{},{},{},{},{},{},{}\n",
            self.f1,
            self.recall,
            self.openq_acc,
            self.openq_recall,
            self.closed.n,
            self.open.n,
            self.n_missing_predictions
        )
    }
}
