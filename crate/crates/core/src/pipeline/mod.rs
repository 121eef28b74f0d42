//! End-to-end inference: downscale, propose, crop, segment, extract boxes
//! and merge them back into UHR coordinates.

pub mod bench;
pub mod data;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::eval::{pseudo_scores, GtInstance, PseudoScoreError, RunTiming};
use crate::postproc::{binarize, boxes_from_mask, PostprocParams};
use crate::raster::{BinaryMask, GrayImage, LabelImage};
use crate::rpn::{self, downscale_to, nms, remap_and_crop, CropParams, ProposalNet, RpnError};
use crate::ynet::{self, YNetError, YNetModel};

/// Detections that overlap more than this across crops are merged.
pub const DEDUP_IOU: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    YNet(#[from] YNetError),
    #[error(transparent)]
    Rpn(#[from] RpnError),
    #[error(transparent)]
    PseudoScore(#[from] PseudoScoreError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Relative paths resolve against the config file's directory.
    pub ynet_checkpoint: PathBuf,
    pub pnet_checkpoint: PathBuf,
    #[serde(default)]
    pub postproc: PostprocParams,
    #[serde(default = "default_score_threshold")]
    pub score_threshold: f64,
    #[serde(default = "default_nms_iou")]
    pub nms_iou: f64,
    #[serde(default)]
    pub crop: CropParams,
    /// Worker threads for per-crop segmentation; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub seed: u64,
}

pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.3;
pub const DEFAULT_NMS_IOU: f64 = 0.6;

fn default_score_threshold() -> f64 {
    DEFAULT_SCORE_THRESHOLD
}

fn default_nms_iou() -> f64 {
    DEFAULT_NMS_IOU
}

impl PipelineConfig {
    pub fn new(ynet_checkpoint: impl Into<PathBuf>, pnet_checkpoint: impl Into<PathBuf>) -> Self {
        Self {
            ynet_checkpoint: ynet_checkpoint.into(),
            pnet_checkpoint: pnet_checkpoint.into(),
            postproc: PostprocParams::default(),
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            nms_iou: DEFAULT_NMS_IOU,
            crop: CropParams::default(),
            threads: 0,
            seed: 0,
        }
    }

    /// Parses the JSON file and resolves checkpoint paths next to it.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.ynet_checkpoint, &mut cfg.pnet_checkpoint] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.postproc.validate().map_err(PipelineError::Config)?;
        for (name, v) in [
            ("score_threshold", self.score_threshold),
            ("nms_iou", self.nms_iou),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(PipelineError::Config(format!(
                    "{name} {v} is outside (0, 1)"
                )));
            }
        }
        if self.crop.crop_size == 0 || self.crop.overlap >= self.crop.crop_size {
            return Err(PipelineError::Config(
                "crop overlap must be smaller than the crop size".into(),
            ));
        }
        Ok(())
    }
}

/// Binarized segmentation of one crop, before erosion.
#[derive(Clone, Debug, PartialEq)]
pub struct CropMask {
    pub origin: (i64, i64),
    pub mask: BinaryMask,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    /// UHR boxes sorted by `(y, x)`.
    pub detections: Vec<BBox>,
    /// Proposals after NMS, in LR coordinates.
    pub proposals: Vec<BBox>,
    pub regions: Vec<BBox>,
    pub crop_masks: Vec<CropMask>,
    pub timing: RunTiming,
}

impl PipelineOutput {
    /// Crop masks pasted into a full-image mask of `width x height`.
    pub fn stitched_mask(&self, width: usize, height: usize) -> BinaryMask {
        let mut m = BinaryMask::new(width, height);
        for c in &self.crop_masks {
            m.or_window(&c.mask, c.origin.0, c.origin.1);
        }
        m
    }
}

/// Loaded models plus configuration, checked for consistency up front.
pub struct Pipeline {
    config: PipelineConfig,
    ynet: YNetModel<f32>,
    pnet: ProposalNet<f32>,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn load(config: PipelineConfig) -> Result<Self, PipelineError> {
        let ynet = ynet::load_checkpoint(&config.ynet_checkpoint)?;
        let pnet = rpn::load_checkpoint(&config.pnet_checkpoint)?;
        Self::new(config, ynet, pnet)
    }

    pub fn new(
        config: PipelineConfig,
        ynet: YNetModel<f32>,
        mut pnet: ProposalNet<f32>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let input = ynet.config().input_size;
        if input != config.crop.crop_size {
            return Err(PipelineError::Config(format!(
                "crop size {} does not match the Y-Net checkpoint input size {input}",
                config.crop.crop_size
            )));
        }
        pnet.set_thresholds(config.score_threshold, config.nms_iou);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
        Ok(Self {
            config,
            ynet,
            pnet,
            pool,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn ynet(&self) -> &YNetModel<f32> {
        &self.ynet
    }

    pub fn pnet(&self) -> &ProposalNet<f32> {
        &self.pnet
    }

    /// Detections with score 1.0.
    pub fn run(&self, uhr: &GrayImage) -> Result<PipelineOutput, PipelineError> {
        self.run_with(uhr, true)
    }

    /// `parallel = false` segments crops on the calling thread.
    pub fn run_with(
        &self,
        uhr: &GrayImage,
        parallel: bool,
    ) -> Result<PipelineOutput, PipelineError> {
        let started = Instant::now();
        let mut timing = RunTiming::default();
        let lap = |t: &mut Instant| {
            let ms = t.elapsed().as_secs_f64() * 1e3;
            *t = Instant::now();
            ms
        };
        let mut t = Instant::now();
        let size = self.pnet.config().input_size;
        let (lr, map) = downscale_to(uhr, size, size);
        timing.add("downscale", lap(&mut t));

        let proposals = nms(&self.pnet.propose(&lr)?, self.config.nms_iou);
        let crops = remap_and_crop(uhr, &proposals, &map, &self.config.crop);
        timing.add("propose", lap(&mut t));

        let threshold = self.config.postproc.threshold;
        let segment = |c: &rpn::Crop| -> Result<CropMask, PipelineError> {
            let prob = self.ynet.forward_image(&c.image)?;
            Ok(CropMask {
                origin: c.origin,
                mask: binarize(&prob, threshold),
            })
        };
        let crop_masks: Vec<CropMask> = if parallel {
            self.pool.install(|| {
                crops
                    .crops
                    .par_iter()
                    .map(segment)
                    .collect::<Result<_, _>>()
            })?
        } else {
            crops.crops.iter().map(segment).collect::<Result<_, _>>()?
        };
        timing.add("ynet", lap(&mut t));

        let detections = merge_crop_boxes(
            &crop_masks,
            &self.config.postproc,
            uhr.width(),
            uhr.height(),
        );
        timing.add("postproc", lap(&mut t));
        timing.total_ms = started.elapsed().as_secs_f64() * 1e3;
        Ok(PipelineOutput {
            detections,
            proposals,
            regions: crops.regions,
            crop_masks,
            timing,
        })
    }
}

/// Boxes of every crop mask moved into image coordinates, clamped, and
/// deduplicated across overlapping crops. Inside the dedup a box ranks by
/// how densely its crop mask fills it; returned scores are 1.0.
pub fn merge_crop_boxes(
    crops: &[CropMask],
    params: &PostprocParams,
    width: usize,
    height: usize,
) -> Vec<BBox> {
    let mut all = Vec::new();
    for c in crops {
        for b in boxes_from_mask(&c.mask, params) {
            let (x0, y0, x1, y1) = b.pixel_span(c.mask.width(), c.mask.height());
            let set: usize = (y0..y1)
                .map(|y| (x0..x1).filter(|&x| c.mask.get(x, y)).count())
                .sum();
            let fill = set as f64 / ((x1 - x0) * (y1 - y0)).max(1) as f64;
            if let Some(m) = b
                .translate(c.origin.0 as f64, c.origin.1 as f64)
                .clamp_to(width as f64, height as f64)
            {
                all.push(m.with_score(fill));
            }
        }
    }
    let mut kept: Vec<BBox> = nms(&all, DEDUP_IOU)
        .into_iter()
        .map(|b| b.with_score(1.0))
        .collect();
    kept.sort_by(|a, b| {
        a.y.total_cmp(&b.y)
            .then(a.x.total_cmp(&b.x))
            .then(a.w.total_cmp(&b.w))
            .then(a.h.total_cmp(&b.h))
    });
    kept
}

/// Replaces each detection's score with the pseudo-score of the GT instance
/// it overlaps most; detections touching no instance score 0.
pub fn assign_pseudo_scores(
    detections: &[BBox],
    pred: &BinaryMask,
    labels: &LabelImage,
    instances: &[GtInstance],
) -> Result<Vec<BBox>, PipelineError> {
    let scores = pseudo_scores(pred, labels, instances)?;
    Ok(detections
        .iter()
        .map(|d| {
            let best = instances
                .iter()
                .zip(&scores)
                .map(|(g, &s)| (d.iou(&g.bbox), s))
                .filter(|(iou, _)| *iou > 0.0)
                .max_by(|a, b| a.0.total_cmp(&b.0));
            d.with_score(best.map_or(0.0, |(_, s)| s))
        })
        .collect())
}
