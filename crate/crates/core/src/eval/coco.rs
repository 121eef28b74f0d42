use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;

/// Reported for buckets without ground truth.
pub const UNDEFINED: f64 = -1.0;

/// Recall sample points of the interpolated precision integral.
pub const RECALL_POINTS: usize = 101;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AreaRange {
    All,
    Small,
    Medium,
    Large,
}

impl AreaRange {
    /// Half-open `[lo, hi)` area bounds in square pixels.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            AreaRange::All => (0.0, f64::INFINITY),
            AreaRange::Small => (0.0, 32.0 * 32.0),
            AreaRange::Medium => (32.0 * 32.0, 96.0 * 96.0),
            AreaRange::Large => (96.0 * 96.0, f64::INFINITY),
        }
    }

    pub fn contains(self, area: f64) -> bool {
        let (lo, hi) = self.bounds();
        area >= lo && area < hi
    }
}

/// Ground truth and scored detections of one image.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalImage {
    pub gts: Vec<BBox>,
    pub dets: Vec<BBox>,
}

/// The standard sweep `.50:.05:.95`.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// Detection ranking: score descending, then image index, then `(y, x)`.
pub fn rank_order(a: (usize, &BBox), b: (usize, &BBox)) -> Ordering {
    b.1.score
        .total_cmp(&a.1.score)
        .then(a.0.cmp(&b.0))
        .then(a.1.y.total_cmp(&b.1.y))
        .then(a.1.x.total_cmp(&b.1.x))
}

/// Per-detection outcome of greedy matching in one image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageMatch {
    /// Indices into `dets` of the (at most `max_dets`) ranked detections.
    pub order: Vec<usize>,
    /// Matched GT index per ranked detection.
    pub matched: Vec<Option<usize>>,
    /// Ranked detections excluded from the bucket.
    pub ignored: Vec<bool>,
    pub gt_ignored: Vec<bool>,
}

/// Greedy one-to-one matching: each ranked detection takes the unmatched
/// in-bucket GT of highest IoU (at least `threshold`), falling back to an
/// out-of-bucket GT. Equal IoU prefers the lower GT index.
pub fn match_image(
    img: &EvalImage,
    image_index: usize,
    threshold: f64,
    area: AreaRange,
    max_dets: usize,
) -> ImageMatch {
    let mut order: Vec<usize> = (0..img.dets.len()).collect();
    order.sort_by(|&a, &b| rank_order((image_index, &img.dets[a]), (image_index, &img.dets[b])));
    order.truncate(max_dets);
    let gt_ignored: Vec<bool> = img.gts.iter().map(|g| !area.contains(g.area())).collect();
    let mut taken = vec![false; img.gts.len()];
    let mut matched = Vec::with_capacity(order.len());
    let mut ignored = Vec::with_capacity(order.len());
    for &d in &order {
        let det = &img.dets[d];
        let mut best: Option<(bool, f64, usize)> = None;
        for (g, gt) in img.gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let iou = det.iou(gt);
            if iou < threshold {
                continue;
            }
            let cand = (!gt_ignored[g], iou, g);
            let better = match best {
                None => true,
                Some((b_in, b_iou, _)) => (cand.0, cand.1) > (b_in, b_iou),
            };
            if better {
                best = Some(cand);
            }
        }
        match best {
            Some((_, _, g)) => {
                taken[g] = true;
                matched.push(Some(g));
                ignored.push(gt_ignored[g]);
            }
            None => {
                matched.push(None);
                ignored.push(!area.contains(det.area()));
            }
        }
    }
    ImageMatch {
        order,
        matched,
        ignored,
        gt_ignored,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub iou_threshold: f64,
    /// Interpolated average precision, or [`UNDEFINED`].
    pub ap: f64,
    /// Final recall, or [`UNDEFINED`].
    pub recall: f64,
}

/// AP and recall at one IoU threshold over a set of images.
pub fn evaluate_threshold(
    images: &[EvalImage],
    threshold: f64,
    area: AreaRange,
    max_dets: usize,
) -> ThresholdResult {
    let mut ranked: Vec<(usize, BBox, bool)> = Vec::new();
    let mut positives = 0usize;
    for (i, img) in images.iter().enumerate() {
        let m = match_image(img, i, threshold, area, max_dets);
        positives += m.gt_ignored.iter().filter(|&&ig| !ig).count();
        for (k, &d) in m.order.iter().enumerate() {
            if !m.ignored[k] {
                ranked.push((i, img.dets[d], m.matched[k].is_some()));
            }
        }
    }
    if positives == 0 {
        return ThresholdResult {
            iou_threshold: threshold,
            ap: UNDEFINED,
            recall: UNDEFINED,
        };
    }
    ranked.sort_by(|a, b| rank_order((a.0, &a.1), (b.0, &b.1)));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    for &(_, _, hit) in &ranked {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / positives as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    // precision envelope, non-increasing in rank
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut sum = 0.0;
    for r in 0..RECALL_POINTS {
        let target = r as f64 / (RECALL_POINTS - 1) as f64;
        let idx = recall.partition_point(|&v| v < target);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    ThresholdResult {
        iou_threshold: threshold,
        ap: sum / RECALL_POINTS as f64,
        recall: recall.last().copied().unwrap_or(0.0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub per_threshold: Vec<ThresholdResult>,
    /// Mean AP over thresholds with a defined value, or [`UNDEFINED`].
    pub mean_ap: f64,
    pub mean_recall: f64,
}

fn defined_mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.filter(|&x| x >= 0.0).collect();
    if v.is_empty() {
        UNDEFINED
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn match_and_ap(
    images: &[EvalImage],
    thresholds: &[f64],
    area: AreaRange,
    max_dets: usize,
) -> ApResult {
    let per_threshold: Vec<ThresholdResult> = thresholds
        .iter()
        .map(|&t| evaluate_threshold(images, t, area, max_dets))
        .collect();
    ApResult {
        mean_ap: defined_mean(per_threshold.iter().map(|r| r.ap)),
        mean_recall: defined_mean(per_threshold.iter().map(|r| r.recall)),
        per_threshold,
    }
}

/// Box metrics in the usual summary layout: AP with up to 100 detections
/// per image, AR with up to 10.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocoSummary {
    pub map: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub map_small: f64,
    pub map_medium: f64,
    pub map_large: f64,
    pub ar50: f64,
    pub ar70: f64,
    pub ar80: f64,
    pub ar90: f64,
}

pub fn coco_summary(images: &[EvalImage]) -> CocoSummary {
    let ths = coco_thresholds();
    let all = match_and_ap(images, &ths, AreaRange::All, 100);
    let recall_at = |t: f64| evaluate_threshold(images, t, AreaRange::All, 10).recall;
    CocoSummary {
        map: all.mean_ap,
        ap50: all.per_threshold[0].ap,
        ap75: all.per_threshold[5].ap,
        map_small: match_and_ap(images, &ths, AreaRange::Small, 100).mean_ap,
        map_medium: match_and_ap(images, &ths, AreaRange::Medium, 100).mean_ap,
        map_large: match_and_ap(images, &ths, AreaRange::Large, 100).mean_ap,
        ar50: recall_at(0.5),
        ar70: recall_at(0.7),
        ar80: recall_at(0.8),
        ar90: recall_at(0.9),
    }
}
