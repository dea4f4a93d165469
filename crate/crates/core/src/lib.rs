//! Benchmark harness for hierarchical radiology VQA-segmentation.
//!
//! The crate assembles Ref-Seg / VQA / VQA-Seg task data from source
//! annotations, parses free-form model answers into the three-step
//! detection / diagnosis / segmentation structure, and scores prediction
//! runs with a gated protocol where a failure at an earlier step zeroes
//! every later step of the same sample.
//!
//! Module map:
//!
//! * [`dataset`] renders samples, splits by volume, computes label statistics
//!   and validates manifests.
//! * [`answer`] tokenizes `<segNNN>` references and splits answers into steps.
//! * [`metrics`] holds F1 / Dice / BCE / soft-Dice numerics.
//! * [`mask_io`] loads PNG masks and implements the run-length transport codec.
//! * [`eval`] joins predictions to samples, gates, aggregates and renders reports.
//! * [`predictors`] provides reference predictors and a synthetic dataset generator.

pub mod answer;
pub mod dataset;
pub mod eval;
pub mod hashing;
pub mod mask_io;
pub mod metrics;
pub mod predictors;
pub mod rng;
pub mod templates;

pub use answer::{Detection, ParsedAnswer, SegTokenRef};
pub use dataset::{
    DatasetManifest, Finding, LabelDistribution, LoadedManifest, Modality, RefSegSample,
    SourceRecord, SegTarget, Split, TargetKind, TaskKind, VqaPair, VqaSegSample,
};
pub use eval::{EvalMode, EvalReport, Gate, PredictionRecord, SampleVerdict};
pub use mask_io::TransportedMask;
pub use metrics::{BinaryMask, ConfusionCounts, LossWeights, ProbMask};
pub use predictors::PredictorPolicy;
pub use templates::Templates;

/// Version string embedded in every report.
pub const TOOL_VERSION: &str = concat!("rds-bench ", env!("CARGO_PKG_VERSION"));
