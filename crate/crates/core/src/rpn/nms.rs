use std::cmp::Ordering;

use crate::bbox::BBox;

/// Descending score, then ascending `(x, y)`.
pub fn score_order(a: &BBox, b: &BBox) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.x.total_cmp(&b.x))
        .then(a.y.total_cmp(&b.y))
        .then(a.w.total_cmp(&b.w))
        .then(a.h.total_cmp(&b.h))
}

/// Greedy non-maximum suppression: a box survives iff its IoU with every
/// already kept box is at most `iou_threshold`.
pub fn nms(boxes: &[BBox], iou_threshold: f64) -> Vec<BBox> {
    let mut sorted = boxes.to_vec();
    sorted.sort_by(score_order);
    let mut kept: Vec<BBox> = Vec::with_capacity(sorted.len());
    for b in sorted {
        if kept.iter().all(|k| k.iou(&b) <= iou_threshold) {
            kept.push(b);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let boxes = [
            BBox::new(0.0, 0.0, 10.0, 10.0).with_score(0.9),
            BBox::new(1.0, 1.0, 10.0, 10.0).with_score(0.8),
            BBox::new(20.0, 20.0, 10.0, 10.0).with_score(0.7),
        ];
        assert!((boxes[0].iou(&boxes[1]) - 81.0 / 119.0).abs() < 1e-12);
        assert_eq!(nms(&boxes, 0.5), vec![boxes[0], boxes[2]]);
    }

    #[test]
    fn identical_boxes_keep_one() {
        let b = BBox::new(3.0, 3.0, 5.0, 5.0).with_score(0.5);
        assert_eq!(nms(&[b, b, b], 0.5).len(), 1);
        assert_eq!(nms(&[b], 0.5), vec![b]);
    }
}
