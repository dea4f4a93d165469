//! Scalar metrics and loss numerics.
//!
//! Conventions shared by every function here:
//!
//! * any `0/0` quotient in precision, recall or F1 is `0`;
//! * Dice of two empty masks is `1`;
//! * floating pixel sums use a fixed pairwise tree so results do not depend
//!   on how the caller chunks work.

mod classification;
mod loss;
mod mask;
mod open;
mod overlap;
pub mod sum;

pub use classification::{
    diagnosis_accuracy, diagnosis_f1, diagnosis_indicator, precision_recall_f1, ConfusionCounts,
    Prf,
};
pub use loss::{
    bce_pixel_loss, dice_loss, seg_loss, total_loss, LossWeights, BCE_EPSILON, DICE_SMOOTHING,
};
pub use mask::{BinaryMask, ProbMask};
pub use open::{normalize_answer, open_q_scores, OpenScores};
pub use overlap::{dice_score, OverlapCounts};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("mask dimensions differ: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: u32,
        left_h: u32,
        right_w: u32,
        right_h: u32,
    },
    #[error("mask of {width}x{height} needs {expected} values, got {actual}")]
    Length {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
    #[error("mask dimensions must be positive, got {0}x{1}")]
    ZeroSize(u32, u32),
    #[error("probability {value} at pixel {index} outside [0, 1]")]
    Probability { index: usize, value: f64 },
    #[error("input list is empty")]
    EmptyInput,
    #[error("indicator values must be 0 or 1, got {0}")]
    Indicator(u8),
    #[error("{name} must be a finite non-negative number, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("ground-truth answer is empty after normalization")]
    EmptyGroundTruth,
}
