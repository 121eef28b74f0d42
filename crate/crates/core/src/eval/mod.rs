//! Detection and segmentation metrics plus latency statistics.

pub mod bench;
pub mod coco;
pub mod detection;
pub mod pixel;
pub mod pseudo;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use bench::{latency_stats, BenchReport, LatencyStats, RunTiming};
pub use coco::{coco_summary, match_and_ap, AreaRange, CocoSummary, EvalImage, UNDEFINED};
pub use detection::{detection_rate, DetectionReport};
pub use pixel::{pixel_metrics, Confusion, PixelMetrics};
pub use pseudo::{pseudo_scores, GtInstance, PseudoScoreError};

use crate::bbox::BBox;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub boxes: CocoSummary,
    pub detection: DetectionReport,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pixel: Option<PixelMetrics>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub latency: BTreeMap<String, LatencyStats>,
}

impl MetricsReport {
    pub fn compute(images: &[EvalImage], pixel: Option<PixelMetrics>) -> Self {
        Self {
            boxes: coco_summary(images),
            detection: detection_rate(images, 0.5),
            pixel,
            latency: BTreeMap::new(),
        }
    }
}
