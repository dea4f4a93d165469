//! Volume-aware train/test partitioning.
//!
//! Slices sharing a `volume_id` always land in the same partition. Groups are
//! formed in order of first appearance, shuffled with the run seed, then
//! greedily assigned to the test partition until it reaches the target size.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use thiserror::Error;

use super::SourceRecord;
use crate::rng::run_rng;

/// Minimum tolerance on the achieved test fraction.
pub const SPLIT_SLACK: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("cannot split an empty record list")]
    Empty,
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub train: Vec<SourceRecord>,
    pub test: Vec<SourceRecord>,
    pub requested_fraction: f64,
    pub achieved_fraction: f64,
    /// Largest group size over the record count; the split cannot be finer.
    pub group_granularity: f64,
    pub warnings: Vec<String>,
}

impl SplitOutcome {
    /// Allowed deviation: one volume group or 2%, whichever is larger.
    pub fn tolerance(&self) -> f64 {
        self.group_granularity.max(SPLIT_SLACK)
    }

    pub fn within_tolerance(&self) -> bool {
        (self.achieved_fraction - self.requested_fraction).abs() <= self.tolerance() + 1e-12
    }
}

pub fn split_by_volume(
    records: &[SourceRecord],
    test_fraction: f64,
    seed: u64,
) -> Result<SplitOutcome, SplitError> {
    if records.is_empty() {
        return Err(SplitError::Empty);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SplitError::Fraction(test_fraction));
    }

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut by_volume: HashMap<&str, usize> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        match r.volume_id.as_deref() {
            Some(v) => {
                let g = *by_volume.entry(v).or_insert_with(|| {
                    groups.push(Vec::new());
                    groups.len() - 1
                });
                groups[g].push(i);
            }
            None => groups.push(vec![i]),
        }
    }
    groups.shuffle(&mut run_rng(seed));

    let n = records.len();
    let target = (test_fraction * n as f64).round() as usize;
    let mut in_test = vec![false; n];
    let mut test_count = 0usize;
    for g in &groups {
        let with = test_count + g.len();
        let take = if with <= target {
            true
        } else {
            // overshoot only when it lands closer to the target
            with - target < target.saturating_sub(test_count)
        };
        if take {
            for &i in g {
                in_test[i] = true;
            }
            test_count = with;
        }
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (r, &t) in records.iter().zip(&in_test) {
        if t {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    let achieved = test.len() as f64 / n as f64;
    let largest = groups.iter().map(Vec::len).max().unwrap_or(1);
    let mut warnings = Vec::new();
    if (achieved - test_fraction).abs() > SPLIT_SLACK {
        warnings.push(format!(
            "requested test fraction {test_fraction:.4} unattainable with volume groups \
             (largest group {largest} of {n}); achieved {achieved:.4}"
        ));
    }
    if test.is_empty() || train.is_empty() {
        warnings.push(format!(
            "one partition is empty (train {}, test {})",
            train.len(),
            test.len()
        ));
    }
    Ok(SplitOutcome {
        train,
        test,
        requested_fraction: test_fraction,
        achieved_fraction: achieved,
        group_granularity: largest as f64 / n as f64,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Finding, Modality};

    fn rec(id: usize, volume: Option<&str>) -> SourceRecord {
        SourceRecord {
            id: format!("r{id:03}"),
            image_path: format!("{id}.png").into(),
            modality: Modality::Ct,
            finding: Finding::Negative,
            targets: vec![],
            volume_id: volume.map(str::to_string),
        }
    }

    fn ids(v: &[SourceRecord]) -> Vec<&str> {
        v.iter().map(|r| r.id.as_str()).collect()
    }

    #[test]
    fn two_volumes_half_split() {
        let recs: Vec<_> = (0..10)
            .map(|i| rec(i, Some(if i < 5 { "a" } else { "b" })))
            .collect();
        for seed in 0..20 {
            let out = split_by_volume(&recs, 0.5, seed).unwrap();
            assert_eq!(out.test.len(), 5);
            let vols: std::collections::HashSet<_> =
                out.test.iter().map(|r| r.volume_id.clone()).collect();
            assert_eq!(vols.len(), 1);
            assert!(out.warnings.is_empty());
        }
    }

    #[test]
    fn single_volume_warns() {
        let recs: Vec<_> = (0..10).map(|i| rec(i, Some("only"))).collect();
        let out = split_by_volume(&recs, 0.3, 1).unwrap();
        assert!(out.train.is_empty() || out.test.is_empty());
        assert!(!out.warnings.is_empty());
        assert!(out.within_tolerance());
    }

    #[test]
    fn singletons_are_deterministic() {
        let recs: Vec<_> = (0..100).map(|i| rec(i, None)).collect();
        let a = split_by_volume(&recs, 0.3, 42).unwrap();
        let b = split_by_volume(&recs, 0.3, 42).unwrap();
        assert_eq!(a.test.len(), 30);
        assert_eq!(ids(&a.test), ids(&b.test));
        let c = split_by_volume(&recs, 0.3, 43).unwrap();
        assert_ne!(ids(&a.test), ids(&c.test));
    }

    #[test]
    fn errors() {
        assert_eq!(split_by_volume(&[], 0.5, 0), Err(SplitError::Empty));
        let recs = vec![rec(0, None)];
        assert_eq!(split_by_volume(&recs, 0.0, 0), Err(SplitError::Fraction(0.0)));
        assert_eq!(split_by_volume(&recs, 1.0, 0), Err(SplitError::Fraction(1.0)));
        assert!(split_by_volume(&recs, f64::NAN, 0).is_err());
    }
}
