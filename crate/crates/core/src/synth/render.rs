use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::raster::{GrayImage, BACKGROUND};

use super::symbology::ModulePattern;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderParams {
    pub quiet_zone_modules: usize,
    /// Bar height as a fraction of the symbol width.
    pub bar_aspect: f64,
    pub min_bar_height: usize,
    pub max_bar_height: usize,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            quiet_zone_modules: 10,
            bar_aspect: 0.3,
            min_bar_height: 24,
            max_bar_height: 400,
        }
    }
}

/// Draws the pattern with bars at 0 on a 255 background and returns the
/// tight box of the symbol (quiet zone excluded) in image coordinates.
pub fn render(
    pattern: &ModulePattern,
    module_px: usize,
    params: &RenderParams,
) -> (GrayImage, BBox) {
    let mp = module_px.max(1);
    let q = params.quiet_zone_modules * mp;
    match pattern {
        ModulePattern::Linear(elements) => {
            let width = pattern.modules() * mp;
            let height = ((params.bar_aspect * width as f64).round() as usize)
                .clamp(params.min_bar_height, params.max_bar_height);
            let mut row = vec![BACKGROUND; width];
            let mut x = 0;
            for e in elements {
                let w = e.modules as usize * mp;
                if e.bar {
                    row[x..x + w].fill(0);
                }
                x += w;
            }
            let img = GrayImage::from_fn(width + 2 * q, height + 2 * q, |px, py| {
                if px >= q && px < q + width && py >= q && py < q + height {
                    row[px - q]
                } else {
                    BACKGROUND
                }
            });
            (
                img,
                BBox::new(q as f64, q as f64, width as f64, height as f64),
            )
        }
        ModulePattern::Matrix { size, bits } => {
            let side = size * mp;
            let img = GrayImage::from_fn(side + 2 * q, side + 2 * q, |px, py| {
                if px >= q
                    && px < q + side
                    && py >= q
                    && py < q + side
                    && bits[((py - q) / mp) * size + (px - q) / mp]
                {
                    0
                } else {
                    BACKGROUND
                }
            });
            (img, BBox::new(q as f64, q as f64, side as f64, side as f64))
        }
    }
}
