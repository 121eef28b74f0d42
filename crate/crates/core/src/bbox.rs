use serde::{Deserialize, Serialize};

/// Axis-aligned box in pixel coordinates: `(x, y)` is the top-left corner
/// and the box covers `[x, x + w) x [y, y + h)`. A box fitted to pixel
/// columns `x0..=x1` therefore has `w = x1 - x0 + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    /// Confidence in `[0, 1]`; 1.0 for ground truth.
    pub score: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self {
            x,
            y,
            w,
            h,
            score: 1.0,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    /// Box covering inclusive pixel ranges `x0..=x1`, `y0..=y1`.
    pub fn from_pixel_span(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self::new(
            x0 as f64,
            y0 as f64,
            (x1 - x0 + 1) as f64,
            (y1 - y0 + 1) as f64,
        )
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.x.is_finite() && self.y.is_finite()
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| BBox::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        self.intersection(other).map_or(0.0, |b| b.area())
    }

    /// Intersection over union; 0 for disjoint boxes.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter <= 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }

    /// Grows every side by `m`.
    pub fn expand(&self, m: f64) -> BBox {
        BBox {
            x: self.x - m,
            y: self.y - m,
            w: self.w + 2.0 * m,
            h: self.h + 2.0 * m,
            score: self.score,
        }
    }

    /// Clips to `[0, width) x [0, height)`; `None` if nothing is left.
    pub fn clamp_to(&self, width: f64, height: f64) -> Option<BBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(width);
        let y1 = self.bottom().min(height);
        (x1 > x0 && y1 > y0).then(|| BBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
            score: self.score,
        })
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }

    /// Integer pixel range `[x0, x1) x [y0, y1)` of pixels whose centres
    /// fall inside the box, clipped to the raster.
    pub fn pixel_span(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let clip = |v: f64, hi: usize| v.round().clamp(0.0, hi as f64) as usize;
        (
            clip(self.x, width),
            clip(self.y, height),
            clip(self.right(), width),
            clip(self.bottom(), height),
        )
    }

    /// `[x, y, w, h]`.
    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Counts unit pixels covered by both boxes (integer boxes only).
    fn raster_iou(a: &BBox, b: &BBox) -> f64 {
        let (mut inter, mut union) = (0.0, 0.0);
        for y in -5..40 {
            for x in -5..40 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let ia = a.contains_point(px, py);
                let ib = b.contains_point(px, py);
                if ia && ib {
                    inter += 1.0;
                }
                if ia || ib {
                    union += 1.0;
                }
            }
        }
        if union == 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BBox::new(20.0, 20.0, 5.0, 5.0)), 0.0);
        let b = BBox::new(5.0, 5.0, 10.0, 10.0);
        assert!((a.iou(&b) - 25.0 / 175.0).abs() < 1e-12);
        assert!((raster_iou(&a, &b) - 25.0 / 175.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded_and_matches_raster(
            ax in 0u8..20, ay in 0u8..20, aw in 1u8..15, ah in 1u8..15,
            bx in 0u8..20, by in 0u8..20, bw in 1u8..15, bh in 1u8..15,
        ) {
            let a = BBox::new(ax as f64, ay as f64, aw as f64, ah as f64);
            let b = BBox::new(bx as f64, by as f64, bw as f64, bh as f64);
            let i = a.iou(&b);
            prop_assert!((0.0..=1.0).contains(&i));
            prop_assert_eq!(i, b.iou(&a));
            prop_assert!((i - raster_iou(&a, &b)).abs() < 1e-12);
        }
    }
}
