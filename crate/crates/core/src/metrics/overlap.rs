use super::{BinaryMask, MetricError};

/// Foreground pixel counts behind the Dice score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OverlapCounts {
    pub pred: u64,
    pub gt: u64,
    pub intersection: u64,
}

impl OverlapCounts {
    pub fn of(pred: &BinaryMask, gt: &BinaryMask) -> Result<Self, MetricError> {
        gt.ensure_same_dims(pred.width(), pred.height())?;
        let mut c = OverlapCounts::default();
        for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
            c.pred += p as u64;
            c.gt += g as u64;
            c.intersection += (p && g) as u64;
        }
        Ok(c)
    }

    /// `2·|P∩G| / (|P| + |G|)`, with two empty masks scoring 1.
    pub fn dice(&self) -> f64 {
        let denom = self.pred + self.gt;
        if denom == 0 {
            1.0
        } else {
            (2 * self.intersection) as f64 / denom as f64
        }
    }
}

pub fn dice_score(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricError> {
    Ok(OverlapCounts::of(pred, gt)?.dice())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: u32, h: u32, on: &[usize]) -> BinaryMask {
        let mut bits = vec![false; (w * h) as usize];
        for &i in on {
            bits[i] = true;
        }
        BinaryMask::new(w, h, bits).unwrap()
    }

    #[test]
    fn identical_and_disjoint() {
        let a = mask(4, 4, &[0, 1, 5]);
        assert_eq!(dice_score(&a, &a).unwrap(), 1.0);
        let b = mask(4, 4, &[2, 3]);
        assert_eq!(dice_score(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn partial_overlap_matches_hand_count() {
        // |P| = 4, |G| = 6, |P∩G| = 3
        let p = mask(4, 4, &[0, 1, 2, 15]);
        let g = mask(4, 4, &[0, 1, 2, 4, 5, 6]);
        assert_eq!(dice_score(&p, &g).unwrap(), 0.6);
    }

    #[test]
    fn both_empty_is_one() {
        let e = BinaryMask::empty(3, 3).unwrap();
        assert_eq!(dice_score(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        let a = BinaryMask::empty(3, 3).unwrap();
        let b = BinaryMask::empty(3, 4).unwrap();
        assert!(matches!(dice_score(&a, &b), Err(MetricError::DimensionMismatch { .. })));
    }
}
