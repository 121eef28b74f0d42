//! Probability map to boxes: threshold, erode, follow outer borders, fit
//! axis-aligned boxes and grow them back by the erosion margin.

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::raster::{BinaryMask, ProbMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocParams {
    pub threshold: f64,
    /// Iterations of 3x3 erosion.
    pub erosion_iterations: usize,
    /// Pixels added on every side of a fitted box.
    pub margin: usize,
    /// Fitted boxes smaller than this (before the margin) are dropped.
    pub min_area: f64,
}

impl Default for PostprocParams {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            erosion_iterations: 2,
            margin: 2,
            min_area: 16.0,
        }
    }
}

impl PostprocParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(format!(
                "binarize threshold {} is outside (0, 1)",
                self.threshold
            ));
        }
        if !(self.min_area >= 0.0) {
            return Err("min_area must be non-negative".into());
        }
        Ok(())
    }
}

/// Closed outer boundary as `(x, y)` pixel coordinates; consecutive points
/// are 8-adjacent and the last point is adjacent to the first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<(usize, usize)>,
}

impl Contour {
    /// Inclusive pixel extents `(x0, y0, x1, y1)`.
    pub fn extents(&self) -> (usize, usize, usize, usize) {
        let x0 = self
            .points
            .iter()
            .map(|p| p.0)
            .min()
            .expect("non-empty contour");
        let x1 = self
            .points
            .iter()
            .map(|p| p.0)
            .max()
            .expect("non-empty contour");
        let y0 = self
            .points
            .iter()
            .map(|p| p.1)
            .min()
            .expect("non-empty contour");
        let y1 = self
            .points
            .iter()
            .map(|p| p.1)
            .max()
            .expect("non-empty contour");
        (x0, y0, x1, y1)
    }
}

/// Pixel is set iff its value is at least `threshold`.
pub fn binarize(prob: &ProbMap, threshold: f64) -> BinaryMask {
    BinaryMask::from_fn(prob.width(), prob.height(), |x, y| {
        prob.get(x, y) as f64 >= threshold
    })
}

fn erode_once(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let src = mask.bits();
    // horizontal then vertical 3-tap minimum; outside counts as 0
    let mut horiz = vec![0u8; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            horiz[y * w + x] =
                (x > 0 && x + 1 < w && row[x - 1] != 0 && row[x] != 0 && row[x + 1] != 0) as u8;
        }
    }
    BinaryMask::from_fn(w, h, |x, y| {
        y > 0
            && y + 1 < h
            && horiz[(y - 1) * w + x] != 0
            && horiz[y * w + x] != 0
            && horiz[(y + 1) * w + x] != 0
    })
}

/// `k` applications of 3x3 square erosion.
pub fn erode(mask: &BinaryMask, k: usize) -> BinaryMask {
    let mut out = mask.clone();
    for _ in 0..k {
        out = erode_once(&out);
    }
    out
}

/// Clockwise neighbour offsets starting west (image y grows downward).
const RING: [(i64, i64); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

fn ring_index(from: (i64, i64), to: (i64, i64)) -> usize {
    let d = (to.0 - from.0, to.1 - from.1);
    RING.iter().position(|&r| r == d).expect("8-adjacent")
}

/// Outer border of the component whose first raster-order pixel is
/// `start`, by border following: the first step searches clockwise from
/// the west neighbour, later steps counter-clockwise from the previous
/// border pixel.
fn follow_border(mask: &BinaryMask, start: (i64, i64)) -> Vec<(usize, usize)> {
    let on = |p: (i64, i64)| mask.get_signed(p.0, p.1);
    let Some(p1) = RING
        .iter()
        .map(|d| (start.0 + d.0, start.1 + d.1))
        .find(|&p| on(p))
    else {
        return vec![(start.0 as usize, start.1 as usize)];
    };
    let mut points = Vec::new();
    let (mut p2, mut p3) = (p1, start);
    loop {
        // counter-clockwise from the element after p2 around p3
        let k2 = ring_index(p3, p2);
        let mut p4 = p3;
        for step in 1..=8 {
            let k = (k2 + 8 - step) % 8;
            let q = (p3.0 + RING[k].0, p3.1 + RING[k].1);
            if on(q) {
                p4 = q;
                break;
            }
        }
        points.push((p3.0 as usize, p3.1 as usize));
        if p4 == start && p3 == p1 {
            break;
        }
        p2 = p3;
        p3 = p4;
    }
    points
}

/// One outer contour per 8-connected component, in raster order of each
/// component's first pixel. Holes are ignored.
pub fn extract_contours(mask: &BinaryMask) -> Vec<Contour> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut contours = Vec::new();
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || seen[y * w + x] {
                continue;
            }
            contours.push(Contour {
                points: follow_border(mask, (x as i64, y as i64)),
            });
            // mark the component so its interior never starts a new border
            seen[y * w + x] = true;
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                for (dx, dy) in RING {
                    let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if mask.get(nx, ny) && !seen[ny * w + nx] {
                        seen[ny * w + nx] = true;
                        stack.push((nx, ny));
                    }
                }
            }
        }
    }
    contours
}

/// Fits a box to each contour, drops those below `min_area`, grows the
/// rest by `margin` and clamps to the image; sorted by `(y, x)`.
pub fn fit_and_expand(
    contours: &[Contour],
    params: &PostprocParams,
    width: usize,
    height: usize,
) -> Vec<BBox> {
    let mut boxes: Vec<BBox> = contours
        .iter()
        .filter(|c| !c.points.is_empty())
        .filter_map(|c| {
            let (x0, y0, x1, y1) = c.extents();
            let fitted = BBox::from_pixel_span(x0, y0, x1, y1);
            if fitted.area() < params.min_area {
                return None;
            }
            fitted
                .expand(params.margin as f64)
                .clamp_to(width as f64, height as f64)
        })
        .collect();
    boxes.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));
    boxes
}

/// Binarize, erode, extract contours, fit and expand. Scores are 1.0.
pub fn extract_boxes(prob: &ProbMap, params: &PostprocParams) -> Vec<BBox> {
    boxes_from_mask(&binarize(prob, params.threshold), params)
}

/// [`extract_boxes`] from an already binarized mask.
pub fn boxes_from_mask(mask: &BinaryMask, params: &PostprocParams) -> Vec<BBox> {
    let eroded = erode(mask, params.erosion_iterations);
    fit_and_expand(
        &extract_contours(&eroded),
        params,
        mask.width(),
        mask.height(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_mask(w: usize, h: usize, rects: &[(usize, usize, usize, usize)]) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            rects
                .iter()
                .any(|&(x0, y0, x1, y1)| x >= x0 && x <= x1 && y >= y0 && y <= y1)
        })
    }

    #[test]
    fn binarize_boundary_is_inclusive() {
        let p = ProbMap::filled(4, 3, 0.5);
        assert_eq!(binarize(&p, 0.5).count_ones(), 12);
        assert_eq!(binarize(&ProbMap::filled(4, 3, 0.49), 0.5).count_ones(), 0);
    }

    #[test]
    fn erosion_examples() {
        let sq = rect_mask(9, 9, &[(2, 2, 6, 6)]);
        assert_eq!(erode(&sq, 1), rect_mask(9, 9, &[(3, 3, 5, 5)]));
        assert_eq!(erode(&sq, 0), sq);
        assert_eq!(erode(&BinaryMask::new(5, 5), 3).count_ones(), 0);
        // touching the border erodes from outside
        let full = rect_mask(4, 4, &[(0, 0, 3, 3)]);
        assert_eq!(erode(&full, 1), rect_mask(4, 4, &[(1, 1, 2, 2)]));
    }

    #[test]
    fn rectangle_contour_is_its_perimeter() {
        let m = rect_mask(12, 10, &[(2, 3, 8, 6)]);
        let c = extract_contours(&m);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].extents(), (2, 3, 8, 6));
        assert_eq!(c[0].points.len(), 2 * (7 + 4) - 4);
        for w in c[0].points.windows(2) {
            assert!(w[0].0.abs_diff(w[1].0) <= 1 && w[0].1.abs_diff(w[1].1) <= 1);
        }
    }

    #[test]
    fn single_pixel_and_line_components() {
        let m = rect_mask(8, 8, &[(1, 1, 1, 1), (3, 5, 6, 5)]);
        let c = extract_contours(&m);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].points, vec![(1, 1)]);
        assert_eq!(c[1].extents(), (3, 5, 6, 5));
    }

    #[test]
    fn worked_fit_example() {
        // rows 10..=20, columns 10..=30
        let points = vec![(10, 10), (30, 10), (30, 20), (10, 20)];
        let boxes = fit_and_expand(
            &[Contour { points }],
            &PostprocParams {
                margin: 2,
                ..PostprocParams::default()
            },
            100,
            100,
        );
        assert_eq!(boxes, vec![BBox::new(8.0, 8.0, 25.0, 15.0)]);
        let dot = Contour {
            points: vec![(5, 5)],
        };
        assert!(fit_and_expand(&[dot], &PostprocParams::default(), 100, 100).is_empty());
    }

    #[test]
    fn extract_boxes_recovers_separated_rectangles() {
        let m = rect_mask(60, 40, &[(5, 5, 24, 20), (28, 8, 50, 30)]);
        let prob = ProbMap::from_fn(60, 40, |x, y| if m.get(x, y) { 0.9 } else { 0.1 });
        let boxes = extract_boxes(&prob, &PostprocParams::default());
        assert_eq!(
            boxes,
            vec![
                BBox::new(5.0, 5.0, 20.0, 16.0),
                BBox::new(28.0, 8.0, 23.0, 23.0)
            ]
        );
        assert!(
            extract_boxes(&ProbMap::filled(10, 10, 0.0), &PostprocParams::default()).is_empty()
        );
    }
}
