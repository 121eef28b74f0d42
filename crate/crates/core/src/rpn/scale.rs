use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::raster::{GrayImage, BACKGROUND};

/// Side of the square low-resolution image the proposal net sees.
pub const LR_SIZE: usize = 256;

/// Affine map between a UHR image and its LR thumbnail. Coefficients
/// `[a, b, c, d, e, f]` send `(x, y)` to `(a x + b y + c, d x + e y + f)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleMap {
    pub source: (usize, usize),
    pub target: (usize, usize),
    pub forward: [f64; 6],
    pub inverse: [f64; 6],
}

fn apply(m: &[f64; 6], x: f64, y: f64) -> (f64, f64) {
    (m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5])
}

impl ScaleMap {
    /// Pure scaling from a `padded` extent onto `target`; `source` keeps
    /// the unpadded image extent.
    pub fn scaling(source: (usize, usize), padded: (usize, usize), target: (usize, usize)) -> Self {
        let sx = padded.0 as f64 / target.0 as f64;
        let sy = padded.1 as f64 / target.1 as f64;
        Self {
            source,
            target,
            forward: [1.0 / sx, 0.0, 0.0, 0.0, 1.0 / sy, 0.0],
            inverse: [sx, 0.0, 0.0, 0.0, sy, 0.0],
        }
    }

    /// The map [`downscale_to`] records for a `source` image reduced to
    /// `target`.
    pub fn downscaling(source: (usize, usize), target: (usize, usize)) -> Self {
        Self::scaling(
            source,
            (source.0.max(target.0), source.1.max(target.1)),
            target,
        )
    }

    /// UHR point to LR.
    pub fn to_lr(&self, x: f64, y: f64) -> (f64, f64) {
        apply(&self.forward, x, y)
    }

    /// LR point to UHR.
    pub fn to_uhr(&self, x: f64, y: f64) -> (f64, f64) {
        apply(&self.inverse, x, y)
    }

    fn map_box(m: &[f64; 6], b: &BBox) -> BBox {
        let corners = [
            (b.x, b.y),
            (b.right(), b.y),
            (b.x, b.bottom()),
            (b.right(), b.bottom()),
        ]
        .map(|(x, y)| apply(m, x, y));
        let x0 = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let x1 = corners
            .iter()
            .map(|c| c.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let y0 = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let y1 = corners
            .iter()
            .map(|c| c.1)
            .fold(f64::NEG_INFINITY, f64::max);
        BBox::new(x0, y0, x1 - x0, y1 - y0).with_score(b.score)
    }

    /// Axis-aligned hull of an LR box mapped into UHR coordinates.
    pub fn box_to_uhr(&self, b: &BBox) -> BBox {
        Self::map_box(&self.inverse, b)
    }

    pub fn box_to_lr(&self, b: &BBox) -> BBox {
        Self::map_box(&self.forward, b)
    }
}

/// `(source index, weight)` taps averaging `[i s, (i + 1) s)` for each
/// output index `i`.
fn area_taps(padded: usize, out: usize) -> Vec<Vec<(usize, f64)>> {
    let s = padded as f64 / out as f64;
    (0..out)
        .map(|i| {
            let (lo, hi) = (i as f64 * s, (i + 1) as f64 * s);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(padded);
            (first..last)
                .filter_map(|k| {
                    let w = (hi.min((k + 1) as f64) - lo.max(k as f64)) / s;
                    (w > 1e-12).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

/// Area-averaging reduction to `out_w x out_h`. Extents below the target
/// are padded with background on the right/bottom first.
pub fn downscale_to(uhr: &GrayImage, out_w: usize, out_h: usize) -> (GrayImage, ScaleMap) {
    let (w, h) = (uhr.width(), uhr.height());
    let (pw, ph) = (w.max(out_w), h.max(out_h));
    let xt = area_taps(pw, out_w);
    let yt = area_taps(ph, out_h);
    // horizontal pass per source row, then vertical
    let mut rows = vec![0.0f64; ph * out_w];
    for y in 0..ph {
        let dst = &mut rows[y * out_w..(y + 1) * out_w];
        if y >= h {
            dst.fill(BACKGROUND as f64);
            continue;
        }
        let src = uhr.row(y);
        for (o, taps) in dst.iter_mut().zip(&xt) {
            *o = taps
                .iter()
                .map(|&(k, wt)| {
                    wt * if k < w {
                        src[k] as f64
                    } else {
                        BACKGROUND as f64
                    }
                })
                .sum();
        }
    }
    let lr = GrayImage::from_fn(out_w, out_h, |x, y| {
        let v: f64 = yt[y].iter().map(|&(k, wt)| wt * rows[k * out_w + x]).sum();
        v.round().clamp(0.0, 255.0) as u8
    });
    (lr, ScaleMap::downscaling((w, h), (out_w, out_h)))
}

/// Reduces a UHR image to the 256x256 proposal input.
pub fn downscale(uhr: &GrayImage) -> (GrayImage, ScaleMap) {
    downscale_to(uhr, LR_SIZE, LR_SIZE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_stays_constant() {
        let (lr, map) = downscale(&GrayImage::filled(2560, 2560, 77));
        assert!(lr.data().iter().all(|&v| v == 77));
        assert_eq!(map.to_uhr(256.0, 256.0), (2560.0, 2560.0));
    }

    #[test]
    fn pixel_checkerboard_averages_to_mid_gray() {
        let img = GrayImage::from_fn(512, 512, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 });
        let (lr, _) = downscale(&img);
        assert!(lr.data().iter().all(|&v| v == 128));
    }

    #[test]
    fn small_input_is_padded() {
        let (lr, map) = downscale(&GrayImage::filled(100, 300, 0));
        assert_eq!((lr.width(), lr.height()), (256, 256));
        assert_eq!(lr.get(50, 10), 0);
        assert_eq!(lr.get(200, 10), 255);
        assert_eq!(map.source, (100, 300));
    }

    #[test]
    fn non_integer_factor_keeps_mass() {
        let img = GrayImage::from_fn(300, 300, |x, _| (x % 256) as u8);
        let (lr, _) = downscale(&img);
        let src_mean = img.data().iter().map(|&v| v as f64).sum::<f64>() / (300.0 * 300.0);
        let lr_mean = lr.data().iter().map(|&v| v as f64).sum::<f64>() / (256.0 * 256.0);
        assert!((src_mean - lr_mean).abs() < 0.5);
    }
}
