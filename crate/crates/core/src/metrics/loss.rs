//! Mask losses and the weighted text + segmentation objective.

use serde::{Deserialize, Serialize};

use super::sum::pairwise_sum;
use super::{BinaryMask, MetricError, ProbMask};

/// Probability clamp for BCE.
pub const BCE_EPSILON: f64 = 1e-7;
/// Additive smoothing of the soft Dice quotient.
pub const DICE_SMOOTHING: f64 = 1e-6;

/// Weights of the total objective and of its segmentation part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_text: f64,
    pub lambda_seg: f64,
    pub lambda_bce: f64,
    pub lambda_dice: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_text: 1.0,
            lambda_seg: 1.0,
            lambda_bce: 2.0,
            lambda_dice: 0.5,
        }
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<(), MetricError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(MetricError::Negative { name, value })
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), MetricError> {
        non_negative("lambda_text", self.lambda_text)?;
        non_negative("lambda_seg", self.lambda_seg)?;
        non_negative("lambda_bce", self.lambda_bce)?;
        non_negative("lambda_dice", self.lambda_dice)
    }
}

/// Mean pixel binary cross-entropy with `p` clamped to `[ε, 1 − ε]`.
pub fn bce_pixel_loss(pred: &ProbMask, gt: &BinaryMask) -> Result<f64, MetricError> {
    gt.ensure_same_dims(pred.width(), pred.height())?;
    let p = pred.values();
    let m = gt.bits();
    let total = pairwise_sum(p.len(), |i| {
        let q = p[i].clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        if m[i] {
            -q.ln()
        } else {
            -(1.0 - q).ln()
        }
    });
    Ok(total / p.len() as f64)
}

/// Soft Dice loss `1 − (2·Σp·m + s) / (Σp + Σm + s)`.
pub fn dice_loss(pred: &ProbMask, gt: &BinaryMask) -> Result<f64, MetricError> {
    gt.ensure_same_dims(pred.width(), pred.height())?;
    let p = pred.values();
    let m = gt.bits();
    let inter = pairwise_sum(p.len(), |i| if m[i] { p[i] } else { 0.0 });
    let sum_p = pairwise_sum(p.len(), |i| p[i]);
    let sum_m = gt.count_ones() as f64;
    Ok(1.0 - (2.0 * inter + DICE_SMOOTHING) / (sum_p + sum_m + DICE_SMOOTHING))
}

/// `λ_bce · BCE + λ_dice · soft Dice`.
pub fn seg_loss(pred: &ProbMask, gt: &BinaryMask, w: &LossWeights) -> Result<f64, MetricError> {
    w.validate()?;
    let bce = bce_pixel_loss(pred, gt)?;
    let dice = dice_loss(pred, gt)?;
    Ok(w.lambda_bce * bce + w.lambda_dice * dice)
}

/// `λ_text · l_text + λ_seg · l_seg`; the text loss is supplied by the caller.
pub fn total_loss(l_text: f64, l_seg: f64, w: &LossWeights) -> Result<f64, MetricError> {
    non_negative("l_text", l_text)?;
    non_negative("l_seg", l_seg)?;
    w.validate()?;
    Ok(w.lambda_text * l_text + w.lambda_seg * l_seg)
}
