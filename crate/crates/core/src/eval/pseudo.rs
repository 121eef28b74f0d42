use crate::bbox::BBox;
use crate::raster::{BinaryMask, LabelImage};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PseudoScoreError {
    #[error("mask extents differ: prediction {pred:?}, ground truth {gt:?}")]
    Extents {
        pred: (usize, usize),
        gt: (usize, usize),
    },
    #[error("instance {0} has no ground-truth pixels")]
    EmptyInstance(u32),
}

/// Ground-truth instance as seen by the scorer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtInstance {
    pub id: u32,
    pub bbox: BBox,
}

/// Predicted pixels inside each instance's box over the instance's own
/// pixel count, clamped to `[0, 1]`.
pub fn pseudo_scores(
    pred: &BinaryMask,
    labels: &LabelImage,
    instances: &[GtInstance],
) -> Result<Vec<f64>, PseudoScoreError> {
    let (w, h) = (labels.width(), labels.height());
    if (pred.width(), pred.height()) != (w, h) {
        return Err(PseudoScoreError::Extents {
            pred: (pred.width(), pred.height()),
            gt: (w, h),
        });
    }
    let mut gt_pixels = vec![0u64; 256];
    for &v in labels.data() {
        gt_pixels[v as usize] += 1;
    }
    instances
        .iter()
        .map(|inst| {
            let n = if (1..=255).contains(&inst.id) {
                gt_pixels[inst.id as usize]
            } else {
                0
            };
            if n == 0 {
                return Err(PseudoScoreError::EmptyInstance(inst.id));
            }
            let (x0, y0, x1, y1) = inst.bbox.pixel_span(w, h);
            let mut hits = 0u64;
            for y in y0..y1 {
                hits += (x0..x1).filter(|&x| pred.get(x, y)).count() as u64;
            }
            Ok((hits as f64 / n as f64).min(1.0))
        })
        .collect()
}
