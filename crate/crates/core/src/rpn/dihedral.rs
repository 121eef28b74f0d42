//! The eight symmetries of the square, as used for augmentation and
//! flip-averaged proposals. Symmetry `d` transposes when bit 2 is set,
//! then mirrors x for bit 0 and y for bit 1.

use crate::bbox::BBox;
use crate::raster::GrayImage;

pub const SYMMETRIES: u8 = 8;

fn point(x: f64, y: f64, extent: f64, d: u8) -> (f64, f64) {
    let (mut x, mut y) = if d & 4 != 0 { (y, x) } else { (x, y) };
    if d & 1 != 0 {
        x = extent - x;
    }
    if d & 2 != 0 {
        y = extent - y;
    }
    (x, y)
}

/// The symmetry that undoes `d`.
pub fn inverse(d: u8) -> u8 {
    // with a transpose, a mirror applied after it acts on the other axis
    if d & 4 != 0 {
        4 | ((d & 1) << 1) | ((d & 2) >> 1)
    } else {
        d
    }
}

pub fn dihedral_image(img: &GrayImage, d: u8) -> GrayImage {
    if d == 0 {
        return img.clone();
    }
    let s = img.width();
    assert_eq!(s, img.height(), "dihedral transforms need a square image");
    GrayImage::from_fn(s, s, |x, y| {
        let (mut u, mut v) = (x, y);
        if d & 2 != 0 {
            v = s - 1 - v;
        }
        if d & 1 != 0 {
            u = s - 1 - u;
        }
        if d & 4 != 0 {
            std::mem::swap(&mut u, &mut v);
        }
        img.get(u, v)
    })
}

/// Box under symmetry `d` of the square `[0, extent]²`; the score is kept.
pub fn dihedral_box(b: &BBox, extent: f64, d: u8) -> BBox {
    let (ax, ay) = point(b.x, b.y, extent, d);
    let (bx, by) = point(b.right(), b.bottom(), extent, d);
    BBox::new(ax.min(bx), ay.min(by), (ax - bx).abs(), (ay - by).abs()).with_score(b.score)
}
