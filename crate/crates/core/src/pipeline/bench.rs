//! Latency benchmark of the pipeline against exhaustive sliding-window
//! segmentation, run on the calling thread only.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::eval::bench::{BenchReport, DEFAULT_WARMUP};
use crate::eval::RunTiming;
use crate::postproc::binarize;
use crate::raster::{GrayImage, BACKGROUND};
use crate::rpn::tile_starts;

use super::{merge_crop_boxes, CropMask, Pipeline, PipelineError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchOptions {
    pub warmup: usize,
    pub repetitions: usize,
    /// Also time the sliding-window baseline.
    pub sliding_window: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            warmup: DEFAULT_WARMUP,
            repetitions: 5,
            sliding_window: true,
        }
    }
}

/// Window origins tiling the whole image at the pipeline's crop size and
/// overlap.
pub fn sliding_origins(
    width: usize,
    height: usize,
    crop: usize,
    overlap: usize,
) -> Vec<(i64, i64)> {
    let xs = tile_starts(0, width, crop, overlap);
    let ys = tile_starts(0, height, crop, overlap);
    ys.iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect()
}

/// Segments every window of the image and merges the boxes.
pub fn sliding_window(pipeline: &Pipeline, uhr: &GrayImage) -> Result<Vec<BBox>, PipelineError> {
    let cfg = pipeline.config();
    let cs = cfg.crop.crop_size;
    let mut masks = Vec::new();
    for (x, y) in sliding_origins(uhr.width(), uhr.height(), cs, cfg.crop.overlap) {
        let prob = pipeline
            .ynet()
            .forward_image(&uhr.crop_padded(x, y, cs, cs, BACKGROUND))?;
        masks.push(CropMask {
            origin: (x, y),
            mask: binarize(&prob, cfg.postproc.threshold),
        });
    }
    Ok(merge_crop_boxes(
        &masks,
        &cfg.postproc,
        uhr.width(),
        uhr.height(),
    ))
}

pub fn benchmark(
    pipeline: &Pipeline,
    images: &[GrayImage],
    opts: &BenchOptions,
) -> Result<BenchReport, PipelineError> {
    if images.is_empty() || opts.repetitions == 0 {
        return Err(PipelineError::Config(
            "benchmark needs at least one image and one repetition".into(),
        ));
    }
    for i in 0..opts.warmup {
        pipeline.run_with(&images[i % images.len()], false)?;
    }
    let mut runs: Vec<RunTiming> = Vec::new();
    for _ in 0..opts.repetitions {
        for img in images {
            runs.push(pipeline.run_with(img, false)?.timing);
        }
    }
    let sliding = if opts.sliding_window {
        for i in 0..opts.warmup.min(1) {
            sliding_window(pipeline, &images[i % images.len()])?;
        }
        let mut samples = Vec::new();
        for _ in 0..opts.repetitions {
            for img in images {
                let t = Instant::now();
                sliding_window(pipeline, img)?;
                samples.push(t.elapsed().as_secs_f64() * 1e3);
            }
        }
        Some(samples)
    } else {
        None
    };
    Ok(BenchReport::from_runs(
        &runs,
        opts.warmup,
        opts.repetitions,
        images.len(),
        sliding.as_deref(),
    ))
}
