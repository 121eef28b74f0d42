use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::raster::{GrayImage, BACKGROUND};

use super::scale::ScaleMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CropParams {
    pub crop_size: usize,
    /// Overlap between neighbouring tiles of one large region, in pixels.
    pub overlap: usize,
    /// Fraction of the region extent added on every side.
    pub margin: f64,
    /// Mapped regions narrower or shorter than this are dropped.
    pub min_extent: f64,
}

impl Default for CropParams {
    fn default() -> Self {
        Self {
            crop_size: 400,
            overlap: 50,
            margin: 0.1,
            min_extent: 4.0,
        }
    }
}

/// One square window cut from the UHR image.
#[derive(Clone, Debug)]
pub struct Crop {
    pub image: GrayImage,
    /// Top-left corner in UHR pixels; negative when the window hangs over
    /// the image edge (that part is background-padded).
    pub origin: (i64, i64),
    /// The window clamped to the image.
    pub footprint: BBox,
    /// Index into [`CropSet::regions`].
    pub region: usize,
}

#[derive(Clone, Debug, Default)]
pub struct CropSet {
    pub crops: Vec<Crop>,
    /// Margin-expanded, clamped UHR regions, one per surviving proposal.
    pub regions: Vec<BBox>,
    /// Proposals dropped as degenerate.
    pub dropped: usize,
}

/// Window starts covering `[start, start + extent)` with tiles of `crop`
/// pixels. A short span gets one centred window; a long one gets tiles
/// stepping by `crop - overlap` with the last tile right-aligned.
pub fn tile_starts(start: i64, extent: usize, crop: usize, overlap: usize) -> Vec<i64> {
    if extent <= crop {
        return vec![start + (extent as i64 - crop as i64).div_euclid(2)];
    }
    let step = crop.saturating_sub(overlap).max(1);
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos + crop < extent {
        out.push(start + pos as i64);
        pos += step;
    }
    out.push(start + (extent - crop) as i64);
    out
}

/// Maps an LR proposal into UHR, adds the margin and clamps to the image.
/// `None` when the mapped box is degenerate.
pub fn uhr_region(proposal: &BBox, map: &ScaleMap, params: &CropParams) -> Option<BBox> {
    let (w, h) = map.source;
    let r = map.box_to_uhr(proposal);
    if !(r.w >= params.min_extent && r.h >= params.min_extent) {
        return None;
    }
    let (mx, my) = (params.margin * r.w, params.margin * r.h);
    let grown = BBox::new(r.x - mx, r.y - my, r.w + 2.0 * mx, r.h + 2.0 * my);
    let c = grown.clamp_to(w as f64, h as f64)?;
    let (x0, y0) = (c.x.floor(), c.y.floor());
    let (x1, y1) = (c.right().ceil(), c.bottom().ceil());
    (x1 - x0 >= params.min_extent && y1 - y0 >= params.min_extent)
        .then(|| BBox::new(x0, y0, x1 - x0, y1 - y0).with_score(proposal.score))
}

/// Cuts `crop_size` windows covering every proposal region.
pub fn remap_and_crop(
    uhr: &GrayImage,
    proposals: &[BBox],
    map: &ScaleMap,
    params: &CropParams,
) -> CropSet {
    let mut set = CropSet::default();
    let cs = params.crop_size;
    for p in proposals {
        let Some(region) = uhr_region(p, map, params) else {
            set.dropped += 1;
            continue;
        };
        let index = set.regions.len();
        let xs = tile_starts(region.x as i64, region.w as usize, cs, params.overlap);
        let ys = tile_starts(region.y as i64, region.h as usize, cs, params.overlap);
        for &y0 in &ys {
            for &x0 in &xs {
                let footprint = BBox::new(x0 as f64, y0 as f64, cs as f64, cs as f64)
                    .clamp_to(uhr.width() as f64, uhr.height() as f64)
                    .expect("window overlaps its region");
                set.crops.push(Crop {
                    image: uhr.crop_padded(x0, y0, cs, cs, BACKGROUND),
                    origin: (x0, y0),
                    footprint,
                    region: index,
                });
            }
        }
        set.regions.push(region);
    }
    set
}
