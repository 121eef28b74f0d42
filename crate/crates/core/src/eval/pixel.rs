use serde::{Deserialize, Serialize};

use crate::raster::BinaryMask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn metrics(&self) -> PixelMetrics {
        PixelMetrics {
            accuracy: ratio(self.tp + self.tn, self.total()),
            precision: ratio(self.tp, self.tp + self.fp),
            recall: ratio(self.tp, self.tp + self.fn_),
            miou: 0.5
                * (ratio(self.tp, self.tp + self.fp + self.fn_)
                    + ratio(self.tn, self.tn + self.fp + self.fn_)),
        }
    }
}

/// `num / den`; an empty denominator scores 1.0 (nothing to get wrong).
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelMetrics {
    pub accuracy: f64,
    /// Mean of the barcode and background IoUs.
    pub miou: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, thiserror::Error)]
#[error("mask extents differ: {pred:?} vs {gt:?}")]
pub struct ExtentMismatch {
    pub pred: (usize, usize),
    pub gt: (usize, usize),
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<Confusion, ExtentMismatch> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(ExtentMismatch {
            pred: (pred.width(), pred.height()),
            gt: (gt.width(), gt.height()),
        });
    }
    let mut c = Confusion::default();
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        match (p != 0, g != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn pixel_metrics(pred: &BinaryMask, gt: &BinaryMask) -> Result<PixelMetrics, ExtentMismatch> {
    Ok(confusion(pred, gt)?.metrics())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_masks() {
        let m = BinaryMask::from_fn(6, 5, |x, y| (x + y) % 3 == 0);
        let r = pixel_metrics(&m, &m).unwrap();
        assert_eq!(
            (r.accuracy, r.miou, r.precision, r.recall),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn all_ones_against_empty() {
        let r = pixel_metrics(
            &BinaryMask::from_fn(4, 4, |_, _| true),
            &BinaryMask::new(4, 4),
        )
        .unwrap();
        assert_eq!((r.accuracy, r.precision), (0.0, 0.0));
        // barcode IoU 0, background IoU 0/16
        assert_eq!(r.miou, 0.0);
    }

    #[test]
    fn extents_must_match() {
        assert!(pixel_metrics(&BinaryMask::new(3, 4), &BinaryMask::new(4, 3)).is_err());
    }
}
