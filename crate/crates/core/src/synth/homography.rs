use crate::raster::{GrayImage, BACKGROUND};

use super::SynthError;

/// Row-major 3x3 projective transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography(pub [f64; 9]);

impl Homography {
    pub const IDENTITY: Homography = Homography([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);

    pub fn translation(dx: f64, dy: f64) -> Self {
        Homography([1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0])
    }

    /// Maps a point; `None` at or behind the line at infinity.
    pub fn apply(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let m = &self.0;
        let w = m[6] * x + m[7] * y + m[8];
        (w.abs() > 1e-12).then(|| {
            (
                (m[0] * x + m[1] * y + m[2]) / w,
                (m[3] * x + m[4] * y + m[5]) / w,
            )
        })
    }

    pub fn inverse(&self) -> Option<Homography> {
        let m = &self.0;
        let cof = [
            m[4] * m[8] - m[5] * m[7],
            m[2] * m[7] - m[1] * m[8],
            m[1] * m[5] - m[2] * m[4],
            m[5] * m[6] - m[3] * m[8],
            m[0] * m[8] - m[2] * m[6],
            m[2] * m[3] - m[0] * m[5],
            m[3] * m[7] - m[4] * m[6],
            m[1] * m[6] - m[0] * m[7],
            m[0] * m[4] - m[1] * m[3],
        ];
        let det = m[0] * cof[0] + m[1] * cof[3] + m[2] * cof[6];
        if det.abs() < 1e-15 {
            return None;
        }
        let mut inv = cof.map(|c| c / det);
        let s = inv[8];
        if s.abs() > 1e-15 {
            inv = inv.map(|v| v / s);
        }
        Some(Homography(inv))
    }
}

fn collinear(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let scale = ((b.0 - a.0).hypot(b.1 - a.1) * (c.0 - a.0).hypot(c.1 - a.1)).max(1e-300);
    cross.abs() <= 1e-9 * scale
}

fn any_three_collinear(p: &[(f64, f64); 4]) -> bool {
    [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        .iter()
        .any(|&(i, j, k)| collinear(p[i], p[j], p[k]))
}

/// Solves the 8-unknown linear system (h33 = 1) mapping `src[i]` to
/// `dst[i]` by Gaussian elimination with partial pivoting.
pub fn solve_homography(
    src: &[(f64, f64); 4],
    dst: &[(f64, f64); 4],
) -> Result<Homography, SynthError> {
    if any_three_collinear(src) || any_three_collinear(dst) {
        return Err(SynthError::Degenerate(
            "three of the four points are collinear".into(),
        ));
    }
    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let ((x, y), (u, v)) = (src[i], dst[i]);
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
    }
    for col in 0..8 {
        let pivot = (col..8)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .expect("rows");
        if a[pivot][col].abs() < 1e-12 {
            return Err(SynthError::Degenerate(
                "singular point correspondence".into(),
            ));
        }
        a.swap(col, pivot);
        for r in 0..8 {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..9 {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    let mut h = [0.0; 9];
    for i in 0..8 {
        h[i] = a[i][8] / a[i][i];
    }
    h[8] = 1.0;
    Ok(Homography(h))
}

/// Bilinear sample at continuous pixel-centre coordinates; background
/// outside the image.
pub fn sample_bilinear(img: &GrayImage, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (tx, ty) = (x - fx, y - fy);
    let at = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= img.width() as f64 || yi >= img.height() as f64 {
            BACKGROUND as f64
        } else {
            img.get(xi as usize, yi as usize) as f64
        }
    };
    let top = at(fx, fy) * (1.0 - tx) + at(fx + 1.0, fy) * tx;
    let bottom = at(fx, fy + 1.0) * (1.0 - tx) + at(fx + 1.0, fy + 1.0) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Inverse-maps every output pixel centre through `h` into `src` and
/// samples bilinearly; samples outside `src` are background.
pub fn warp(
    src: &GrayImage,
    h: &Homography,
    out_w: usize,
    out_h: usize,
) -> Result<GrayImage, SynthError> {
    let inv = h
        .inverse()
        .ok_or_else(|| SynthError::Degenerate("homography is not invertible".into()))?;
    Ok(GrayImage::from_fn(out_w, out_h, |x, y| {
        match inv.apply(x as f64 + 0.5, y as f64 + 0.5) {
            Some((sx, sy)) => sample_bilinear(src, sx - 0.5, sy - 0.5)
                .round()
                .clamp(0.0, 255.0) as u8,
            None => BACKGROUND,
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: [(f64, f64); 4] = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)];

    #[test]
    fn identity_and_translation() {
        let h = solve_homography(&SQUARE, &SQUARE).unwrap();
        for (a, b) in h.0.iter().zip(Homography::IDENTITY.0) {
            assert!((a - b).abs() < 1e-12);
        }
        let moved = SQUARE.map(|(x, y)| (x + 5.0, y));
        let t = solve_homography(&SQUARE, &moved).unwrap();
        for (a, b) in t.0.iter().zip(Homography::translation(5.0, 0.0).0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_rejected() {
        let bad = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.0, 5.0)];
        assert!(solve_homography(&bad, &SQUARE).is_err());
        assert!(solve_homography(&SQUARE, &bad).is_err());
    }

    #[test]
    fn warp_by_integer_translation_copies() {
        let img = GrayImage::from_fn(6, 5, |x, y| (x * 40 + y) as u8);
        let out = warp(&img, &Homography::translation(2.0, 1.0), 8, 6).unwrap();
        assert_eq!(out.get(2, 1), img.get(0, 0));
        assert_eq!(out.get(7, 5), img.get(5, 4));
        assert_eq!(out.get(0, 0), 255);
    }
}
