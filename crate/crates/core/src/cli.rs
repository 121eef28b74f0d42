//! Command-line front end: dataset generation, training, inference,
//! evaluation and benchmarking.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;
use crate::bbox::BBox;
use crate::eval::{Confusion, EvalImage, GtInstance, MetricsReport};
use crate::pipeline::bench::{benchmark, BenchOptions};
use crate::pipeline::data::{proposal_sample, scene_crops, CropSampling};
use crate::pipeline::{
    assign_pseudo_scores, merge_crop_boxes, CropMask, Pipeline, PipelineConfig, PipelineError,
};
use crate::raster::{load_png, save_png, BinaryMask, RasterError};
use crate::rpn::{self, train_proposal_net, PNetConfig, PNetHyper, ProposalNet, RpnError, LR_SIZE};
use crate::synth::{
    generate_dataset, load_scene, AnnotationFile, Canvas, ImageRecord, InstanceRecord, SceneConfig,
    SynthError, ANNOTATION_VERSION,
};
use crate::ynet::{self, train_ynet, TrainHyper, YNetConfig, YNetError, YNetModel};

/// Overrides every seed taken from flags or config files.
pub const SEED_ENV: &str = "PIPELINE_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "uhrbar",
    version,
    about = "Barcode detection for ultra-high-resolution images"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compose synthetic scenes and write images, masks and annotations.
    Generate(GenerateArgs),
    /// Train one of the two networks on a generated dataset.
    Train(TrainArgs),
    /// Detect barcodes in one image.
    Infer(InferArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Time the pipeline stages and the sliding-window baseline.
    Bench(BenchArgs),
}

fn parse_extent(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(',')
        .ok_or_else(|| format!("expected W,H, got `{s}`"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    let (w, h) = (p(w)?, p(h)?);
    if w == 0 || h == 0 {
        return Err("extents must be positive".into());
    }
    Ok((w, h))
}

#[derive(Debug, clap::Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub count: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_extent)]
    pub uhr_size: Option<(usize, usize)>,
    #[arg(long, value_parser = parse_extent)]
    pub lr_size: Option<(usize, usize)>,
    /// SceneConfig JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Network {
    Ynet,
    Pnet,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[arg(value_enum)]
    pub network: Network,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct InferArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Write per-crop and stitched masks here.
    #[arg(long)]
    pub dump_masks: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Annotation file holding this image; enables pseudo-scores.
    #[arg(long)]
    pub gt: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub dets: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    /// Use only the first N images of the dataset.
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub no_sliding_window: bool,
}

/// Training settings for Y-Net.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct YNetTrainConfig {
    pub model: YNetConfig,
    pub hyper: TrainHyper,
    pub sampling: CropSampling,
    /// Use only the first N scenes.
    pub max_scenes: Option<usize>,
}

/// Training settings for the proposal net.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PNetTrainConfig {
    pub model: PNetConfig,
    pub hyper: PNetHyper,
    pub max_scenes: Option<usize>,
}

/// `PIPELINE_SEED` if set.
pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| {
            format!("{SEED_ENV}=`{v}` is not an unsigned integer")
        })?)),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(anyhow!("{SEED_ENV}: {e}")),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => match a.network {
            Network::Ynet => train_ynet_cmd(a),
            Network::Pnet => train_pnet_cmd(a),
        },
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut cfg: SceneConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SceneConfig::default(),
    };
    cfg.seed = seed_override()?.unwrap_or(a.seed);
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(s) = a.uhr_size {
        cfg.uhr_size = s;
    }
    if let Some(s) = a.lr_size {
        cfg.lr_size = s;
    }
    let file = generate_dataset(&cfg, a.count, &a.out)?;
    let n: usize = file.images.iter().map(|i| i.instances.len()).sum();
    log::info!(
        "wrote {} scenes with {n} barcodes to {}",
        file.images.len(),
        a.out.display()
    );
    Ok(())
}

fn scene_records(data: &Path, max: Option<usize>) -> Result<(AnnotationFile, Vec<ImageRecord>)> {
    let file = AnnotationFile::load(&data.join(crate::synth::ANNOTATIONS_FILE))?;
    let mut recs = file.images.clone();
    if let Some(m) = max {
        recs.truncate(m);
    }
    if recs.is_empty() {
        bail!("dataset {} has no scenes", data.display());
    }
    Ok((file, recs))
}

fn train_ynet_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg: YNetTrainConfig = read_json(&a.config)?;
    if let Some(s) = seed_override()? {
        cfg.model.seed = s;
        cfg.hyper.seed = s;
    }
    let (_, recs) = scene_records(&a.data, cfg.max_scenes)?;
    let mut samples = Vec::new();
    for rec in &recs {
        let scene = load_scene(&a.data, rec)?;
        samples.extend(scene_crops(
            &scene,
            cfg.model.input_size,
            &cfg.sampling,
            cfg.hyper.seed,
        ));
    }
    log::info!(
        "training Y-Net on {} crops from {} scenes",
        samples.len(),
        recs.len()
    );
    let outcome = train_ynet(YNetModel::build(&cfg.model)?, &samples, &cfg.hyper)?;
    ensure_parent(&a.out)?;
    ynet::save_checkpoint(&outcome.best, &a.out)?;
    let log: Vec<_> = outcome.records.iter().map(|r| r.without_timing()).collect();
    write_json(&log_path(&a.out), &log)
}

fn train_pnet_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg: PNetTrainConfig = read_json(&a.config)?;
    if let Some(s) = seed_override()? {
        cfg.model.seed = s;
        cfg.hyper.seed = s;
    }
    let (_, recs) = scene_records(&a.data, cfg.max_scenes)?;
    let mut samples = Vec::new();
    for rec in &recs {
        samples.push(proposal_sample(
            &load_scene(&a.data, rec)?,
            cfg.model.input_size,
        ));
    }
    log::info!("training the proposal net on {} scenes", samples.len());
    let (net, records) = train_proposal_net(ProposalNet::build(&cfg.model)?, &samples, &cfg.hyper)?;
    ensure_parent(&a.out)?;
    rpn::save_checkpoint(&net, &a.out)?;
    write_json(&log_path(&a.out), &records)
}

/// `<checkpoint>.log.json`
pub fn log_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".log.json");
    PathBuf::from(s)
}

/// Origins of dumped crop masks, `<id>_crops.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropIndex {
    pub crops: Vec<CropEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropEntry {
    pub file: String,
    pub origin: [i64; 2],
}

/// Reloads dumped crop masks.
pub fn load_crop_masks(dir: &Path, id: &str) -> Result<Vec<CropMask>> {
    let index: CropIndex = read_json(&dir.join(format!("{id}_crops.json")))?;
    index
        .crops
        .iter()
        .map(|e| {
            Ok(CropMask {
                origin: (e.origin[0], e.origin[1]),
                mask: BinaryMask::from_gray(&load_png(&dir.join(&e.file))?),
            })
        })
        .collect()
}

fn detection_records(dets: &[BBox]) -> Vec<InstanceRecord> {
    dets.iter()
        .enumerate()
        .map(|(k, d)| InstanceRecord {
            instance_id: k as u32 + 1,
            bbox: d.to_array(),
            symbology: "barcode".into(),
            payload: String::new(),
            score: Some(d.score),
        })
        .collect()
}

fn image_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn infer(a: InferArgs) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(t) = a.threads {
        cfg.threads = t;
    }
    if let Some(s) = seed_override()? {
        cfg.seed = s;
    }
    let pipeline = Pipeline::load(cfg)?;
    let uhr = load_png(&a.image)?;
    let out = pipeline.run(&uhr)?;
    let id = image_id(&a.image);
    let mut dets = out.detections.clone();
    let mut mask_path = String::new();

    if let Some(gt_path) = &a.gt {
        let gt = AnnotationFile::load(gt_path)?;
        let rec = gt
            .images
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| anyhow!("{} has no image `{id}`", gt_path.display()))?;
        let root = gt_path.parent().unwrap_or(Path::new("."));
        let labels = load_png(&root.join(&rec.mask_path))?;
        let inst: Vec<GtInstance> = rec
            .instances
            .iter()
            .map(|i| GtInstance {
                id: i.instance_id,
                bbox: i.bbox(),
            })
            .collect();
        dets = assign_pseudo_scores(
            &dets,
            &out.stitched_mask(uhr.width(), uhr.height()),
            &labels,
            &inst,
        )?;
    }

    if let Some(dir) = &a.dump_masks {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut index = CropIndex { crops: Vec::new() };
        for (k, c) in out.crop_masks.iter().enumerate() {
            let file = format!("{id}_crop{k:04}.png");
            save_png(&c.mask.to_gray(), &dir.join(&file))?;
            index.crops.push(CropEntry {
                file,
                origin: [c.origin.0, c.origin.1],
            });
        }
        write_json(&dir.join(format!("{id}_crops.json")), &index)?;
        let stitched = dir.join(format!("{id}_mask.png"));
        save_png(
            &out.stitched_mask(uhr.width(), uhr.height()).to_gray(),
            &stitched,
        )?;
        mask_path = std::path::absolute(&stitched)
            .unwrap_or(stitched)
            .display()
            .to_string();
    }

    let file = AnnotationFile {
        version: ANNOTATION_VERSION,
        canvas: Canvas {
            uhr: [uhr.width(), uhr.height()],
            lr: [LR_SIZE, LR_SIZE],
        },
        images: vec![ImageRecord {
            id,
            uhr_path: a.image.display().to_string(),
            lr_path: String::new(),
            mask_path,
            instances: detection_records(&dets),
        }],
    };
    ensure_parent(&a.out)?;
    file.save(&a.out)?;
    Ok(())
}

/// Metrics of a detection file against ground truth. Pixel metrics are
/// included when every detection record names a mask; any nonzero pixel
/// counts as barcode.
pub fn evaluate_files(gt_path: &Path, dets_path: &Path) -> Result<MetricsReport> {
    let gt = AnnotationFile::load(gt_path)?;
    let dets = AnnotationFile::load(dets_path)?;
    let (gt_root, det_root) = (
        gt_path.parent().unwrap_or(Path::new(".")),
        dets_path.parent().unwrap_or(Path::new(".")),
    );
    let mut images = Vec::with_capacity(gt.images.len());
    let mut confusion = Confusion::default();
    let mut with_masks = 0;
    for rec in &gt.images {
        let d = dets.images.iter().find(|r| r.id == rec.id);
        images.push(EvalImage {
            gts: rec.instances.iter().map(|i| i.bbox()).collect(),
            dets: d
                .map(|r| r.instances.iter().map(|i| i.bbox()).collect())
                .unwrap_or_default(),
        });
        if let Some(d) = d.filter(|d| !d.mask_path.is_empty() && !rec.mask_path.is_empty()) {
            let pred = BinaryMask::from_labels(&load_png(&det_root.join(&d.mask_path))?);
            let truth = BinaryMask::from_labels(&load_png(&gt_root.join(&rec.mask_path))?);
            confusion.add(&crate::eval::pixel::confusion(&pred, &truth)?);
            with_masks += 1;
        }
    }
    for d in &dets.images {
        if !gt.images.iter().any(|g| g.id == d.id) {
            bail!(
                "detections name image `{}` which is not in {}",
                d.id,
                gt_path.display()
            );
        }
    }
    let pixel = (with_masks > 0 && with_masks == gt.images.len()).then(|| confusion.metrics());
    Ok(MetricsReport::compute(&images, pixel))
}

fn eval(a: EvalArgs) -> Result<()> {
    let report = evaluate_files(&a.gt, &a.dets)?;
    ensure_parent(&a.out)?;
    write_json(&a.out, &report)
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    cfg.threads = 1;
    let pipeline = Pipeline::load(cfg)?;
    let (_, recs) = scene_records(&a.data, a.images)?;
    let images = recs
        .iter()
        .map(|r| load_png(&a.data.join(&r.uhr_path)))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = BenchOptions {
        warmup: a.warmup,
        repetitions: a.repetitions,
        sliding_window: !a.no_sliding_window,
    };
    let report = benchmark(&pipeline, &images, &opts)?;
    if report.accounting_violation {
        log::warn!("stage timings exceeded the end-to-end time; the harness is miscounting");
    }
    ensure_parent(&a.out)?;
    write_json(&a.out, &report)
}

/// Short category of an error for the one-line report.
pub fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if cause.is::<SynthError>() {
            return "dataset";
        }
        if cause.is::<YNetError>() {
            return "ynet";
        }
        if cause.is::<RpnError>() {
            return "rpn";
        }
        if cause.is::<PipelineError>() {
            return "pipeline";
        }
        if cause.is::<RasterError>() {
            return "image";
        }
        if cause.is::<serde_json::Error>() {
            return "parse";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "error"
}

/// The single stderr line printed on failure.
pub fn error_line(kind: &str, e: &dyn std::fmt::Display) -> String {
    serde_json::json!({ "error": kind, "message": format!("{e:#}") }).to_string()
}

/// Re-derives the final boxes of an image from masks written by
/// `infer --dump-masks`.
pub fn boxes_from_dump(
    dir: &Path,
    id: &str,
    width: usize,
    height: usize,
    params: &crate::postproc::PostprocParams,
) -> Result<Vec<BBox>> {
    Ok(merge_crop_boxes(
        &load_crop_masks(dir, id)?,
        params,
        width,
        height,
    ))
}
