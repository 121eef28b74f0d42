use serde::{Deserialize, Serialize};

use super::coco::{match_image, AreaRange, EvalImage};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// Fraction of images whose every GT box is matched.
    pub detection_rate: f64,
    /// Mean IoU over matched pairs; 0 when nothing matched.
    pub miou: f64,
    pub precision: f64,
    pub recall: f64,
    pub matched: usize,
    pub detections: usize,
    pub ground_truth: usize,
}

fn ratio(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

pub fn detection_rate(images: &[EvalImage], iou_threshold: f64) -> DetectionReport {
    let (mut full, mut matched, mut dets, mut gts) = (0usize, 0usize, 0usize, 0usize);
    let mut iou_sum = 0.0;
    for (i, img) in images.iter().enumerate() {
        let m = match_image(img, i, iou_threshold, AreaRange::All, usize::MAX);
        let hits = m.matched.iter().filter(|g| g.is_some()).count();
        for (k, g) in m.matched.iter().enumerate() {
            if let Some(g) = g {
                iou_sum += img.dets[m.order[k]].iou(&img.gts[*g]);
            }
        }
        if hits == img.gts.len() {
            full += 1;
        }
        matched += hits;
        dets += img.dets.len();
        gts += img.gts.len();
    }
    DetectionReport {
        detection_rate: ratio(full, images.len(), 0.0),
        miou: if matched == 0 {
            0.0
        } else {
            iou_sum / matched as f64
        },
        precision: ratio(matched, dets, if gts == 0 { 1.0 } else { 0.0 }),
        recall: ratio(matched, gts, 1.0),
        matched,
        detections: dets,
        ground_truth: gts,
    }
}
