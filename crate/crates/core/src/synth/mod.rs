//! Synthetic barcode scenes: symbology encoders, rendering, perspective
//! warps, scene composition and dataset files.

mod dataset;
mod homography;
mod render;
mod scene;
mod symbology;
pub mod tables;

pub use dataset::{
    annotation_path, check_files, format_id, generate_dataset, load_scene, read_dataset,
    record_to_instances, write_dataset, AnnotationFile, Canvas, ImageRecord, InstanceRecord,
    ANNOTATIONS_FILE, ANNOTATION_VERSION,
};
pub use homography::{sample_bilinear, solve_homography, warp, Homography};
pub use render::{render, RenderParams};
pub use scene::{compose_scene, sample_count, scene_seed, Instance, Scene, SceneConfig};
pub use symbology::{
    check_digit, encode, Code128, Code39, Code93, Ean13, Element, Itf, Matrix2D, ModulePattern,
    Symbology, SymbologyEncoder, SymbologyKind, SymbologyRegistry, UpcA,
};

use crate::raster::RasterError;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("unknown symbology `{0}`")]
    UnknownSymbology(String),
    #[error("character {character:?} is not encodable in {symbology}")]
    InvalidCharacter {
        character: char,
        symbology: &'static str,
    },
    #[error("invalid payload: {0}")]
    Payload(String),
    #[error("invalid module pattern: {0}")]
    Pattern(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("invalid scene config: {0}")]
    Config(String),
    #[error("canvas {width}x{height} is too small to place any barcode")]
    CanvasTooSmall { width: usize, height: usize },
    #[error("io: {0}")]
    Io(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}
