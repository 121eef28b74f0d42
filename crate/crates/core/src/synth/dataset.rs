use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;
use crate::bbox::BBox;
use crate::raster::{load_png, save_png};

use super::scene::{compose_scene, Instance, Scene, SceneConfig};
use super::symbology::SymbologyKind;
use super::SynthError;

pub const ANNOTATION_VERSION: u32 = 1;
pub const ANNOTATIONS_FILE: &str = "annotations.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub uhr: [usize; 2],
    pub lr: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance_id: u32,
    pub bbox: [f64; 4],
    pub symbology: String,
    pub payload: String,
    /// Present on detections only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl InstanceRecord {
    pub fn bbox(&self) -> BBox {
        BBox::from_array(self.bbox).with_score(self.score.unwrap_or(1.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    #[serde(default)]
    pub uhr_path: String,
    #[serde(default)]
    pub lr_path: String,
    #[serde(default)]
    pub mask_path: String,
    pub instances: Vec<InstanceRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub version: u32,
    pub canvas: Canvas,
    pub images: Vec<ImageRecord>,
}

impl AnnotationFile {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = fs::read_to_string(path)
            .map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?;
        let file: AnnotationFile = serde_json::from_str(&text)
            .map_err(|e| SynthError::Dataset(format!("{}: {e}", path.display())))?;
        if file.version != ANNOTATION_VERSION {
            return Err(SynthError::Dataset(format!(
                "{}: annotation version {} is not {ANNOTATION_VERSION}",
                path.display(),
                file.version
            )));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), SynthError> {
        let mut text = serde_json::to_string_pretty(self).expect("annotations serialise");
        text.push('\n');
        write_atomic(path, text.as_bytes())
            .map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))
    }
}

/// Zero-padded id, at least six digits and wide enough for `count` ids, so
/// lexicographic order equals numeric order.
pub fn format_id(id: u64, count: u64) -> String {
    let width = count.saturating_sub(1).max(1).to_string().len().max(6);
    format!("{id:0width$}")
}

fn record_for(scene: &Scene, count: u64) -> ImageRecord {
    let id = format_id(scene.id, count);
    ImageRecord {
        uhr_path: format!("images/uhr/{id}.png"),
        lr_path: format!("images/lr/{id}.png"),
        mask_path: format!("masks/{id}.png"),
        id,
        instances: scene
            .instances
            .iter()
            .map(|i| InstanceRecord {
                instance_id: i.instance_id,
                bbox: i.bbox.to_array(),
                symbology: i.symbology.name().to_string(),
                payload: i.payload.clone(),
                score: None,
            })
            .collect(),
    }
}

fn make_dirs(root: &Path) -> Result<(), SynthError> {
    for d in ["images/uhr", "images/lr", "masks"] {
        fs::create_dir_all(root.join(d))
            .map_err(|e| SynthError::Io(format!("{}: {e}", root.join(d).display())))?;
    }
    Ok(())
}

fn write_scene_files(scene: &Scene, record: &ImageRecord, root: &Path) -> Result<(), SynthError> {
    save_png(&scene.uhr, &root.join(&record.uhr_path))?;
    save_png(&scene.lr, &root.join(&record.lr_path))?;
    save_png(&scene.mask, &root.join(&record.mask_path))?;
    Ok(())
}

/// Writes scenes and their annotation file under `root`.
pub fn write_dataset(
    scenes: &[Scene],
    root: &Path,
    canvas: Canvas,
) -> Result<AnnotationFile, SynthError> {
    make_dirs(root)?;
    let count = scenes.iter().map(|s| s.id + 1).max().unwrap_or(0);
    let mut images = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let record = record_for(scene, count);
        write_scene_files(scene, &record, root)?;
        images.push(record);
    }
    let file = AnnotationFile {
        version: ANNOTATION_VERSION,
        canvas,
        images,
    };
    file.save(&root.join(ANNOTATIONS_FILE))?;
    Ok(file)
}

/// Composes scenes `0..count` and writes them as they are produced, in
/// parallel, without holding every scene in memory.
pub fn generate_dataset(
    cfg: &SceneConfig,
    count: u64,
    root: &Path,
) -> Result<AnnotationFile, SynthError> {
    cfg.validate()?;
    make_dirs(root)?;
    let images = (0..count)
        .into_par_iter()
        .map(|id| {
            let scene = compose_scene(cfg, id)?;
            let record = record_for(&scene, count);
            write_scene_files(&scene, &record, root)?;
            Ok(record)
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    let canvas = Canvas {
        uhr: [cfg.uhr_size.0, cfg.uhr_size.1],
        lr: [cfg.lr_size.0, cfg.lr_size.1],
    };
    let file = AnnotationFile {
        version: ANNOTATION_VERSION,
        canvas,
        images,
    };
    file.save(&root.join(ANNOTATIONS_FILE))?;
    Ok(file)
}

/// Checks that every referenced file exists, naming the first missing id.
pub fn check_files(file: &AnnotationFile, root: &Path) -> Result<(), SynthError> {
    for rec in &file.images {
        for p in [&rec.uhr_path, &rec.lr_path, &rec.mask_path] {
            if !root.join(p).is_file() {
                return Err(SynthError::Dataset(format!(
                    "image {} is missing {}",
                    rec.id, p
                )));
            }
        }
    }
    Ok(())
}

pub fn record_to_instances(rec: &ImageRecord) -> Result<Vec<Instance>, SynthError> {
    rec.instances
        .iter()
        .map(|i| {
            Ok(Instance {
                instance_id: i.instance_id,
                bbox: i.bbox(),
                symbology: i.symbology.parse::<SymbologyKind>()?,
                payload: i.payload.clone(),
            })
        })
        .collect()
}

/// Loads one scene described by `rec`.
pub fn load_scene(root: &Path, rec: &ImageRecord) -> Result<Scene, SynthError> {
    let id = rec
        .id
        .parse::<u64>()
        .map_err(|_| SynthError::Dataset(format!("image id {} is not numeric", rec.id)))?;
    let uhr = load_png(&root.join(&rec.uhr_path))?;
    let lr = load_png(&root.join(&rec.lr_path))?;
    let mask = load_png(&root.join(&rec.mask_path))?;
    if (mask.width(), mask.height()) != (uhr.width(), uhr.height()) {
        return Err(SynthError::Dataset(format!(
            "image {}: mask extent differs from the UHR image",
            rec.id
        )));
    }
    Ok(Scene {
        id,
        uhr,
        lr,
        mask,
        instances: record_to_instances(rec)?,
    })
}

/// Reads the annotation file and every scene under `root`.
pub fn read_dataset(root: &Path) -> Result<(AnnotationFile, Vec<Scene>), SynthError> {
    let file = AnnotationFile::load(&root.join(ANNOTATIONS_FILE))?;
    check_files(&file, root)?;
    let scenes = file
        .images
        .iter()
        .map(|rec| load_scene(root, rec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((file, scenes))
}

pub fn annotation_path(root: &Path) -> PathBuf {
    root.join(ANNOTATIONS_FILE)
}
