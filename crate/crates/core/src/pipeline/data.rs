//! Training samples cut from synthetic scenes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::raster::{BinaryMask, BACKGROUND};
use crate::rpn::{downscale_to, ProposalSample, ScaleMap};
use crate::synth::{scene_seed, Scene};
use crate::ynet::SegSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CropSampling {
    /// Crops centred (with jitter) on each instance.
    pub per_instance: usize,
    /// Uniformly placed crops per scene.
    pub random_per_scene: usize,
    /// Maximum centre offset as a fraction of the crop size.
    pub jitter: f64,
}

impl Default for CropSampling {
    fn default() -> Self {
        Self {
            per_instance: 1,
            random_per_scene: 1,
            jitter: 0.25,
        }
    }
}

/// Segmentation crops of one scene; deterministic in `(scene.id, seed)`.
pub fn scene_crops(
    scene: &Scene,
    crop: usize,
    sampling: &CropSampling,
    seed: u64,
) -> Vec<SegSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(seed, scene.id));
    let (w, h) = (scene.uhr.width() as i64, scene.uhr.height() as i64);
    let half = crop as f64 / 2.0;
    let reach = sampling.jitter * crop as f64;
    let mut origins = Vec::new();
    for inst in &scene.instances {
        let (cx, cy) = inst.bbox.center();
        for _ in 0..sampling.per_instance {
            let dx = if reach > 0.0 {
                rng.random_range(-reach..=reach)
            } else {
                0.0
            };
            let dy = if reach > 0.0 {
                rng.random_range(-reach..=reach)
            } else {
                0.0
            };
            origins.push((
                (cx - half + dx).round() as i64,
                (cy - half + dy).round() as i64,
            ));
        }
    }
    for _ in 0..sampling.random_per_scene {
        let x = rng.random_range(0..=(w - crop as i64).max(0));
        let y = rng.random_range(0..=(h - crop as i64).max(0));
        origins.push((x, y));
    }
    origins
        .into_iter()
        .map(|(x, y)| SegSample {
            image: scene.uhr.crop_padded(x, y, crop, crop, BACKGROUND),
            mask: BinaryMask::from_labels(&scene.mask.crop_padded(x, y, crop, crop, 0)),
        })
        .collect()
}

/// LR image at `size` with instance boxes in LR coordinates.
pub fn proposal_sample(scene: &Scene, size: usize) -> ProposalSample {
    let (w, h) = (scene.uhr.width(), scene.uhr.height());
    let lr = if scene.lr.width() == size && scene.lr.height() == size {
        scene.lr.clone()
    } else {
        downscale_to(&scene.uhr, size, size).0
    };
    let map = ScaleMap::downscaling((w, h), (size, size));
    ProposalSample {
        lr,
        boxes: scene
            .instances
            .iter()
            .map(|i| map.box_to_lr(&i.bbox))
            .collect(),
    }
}
