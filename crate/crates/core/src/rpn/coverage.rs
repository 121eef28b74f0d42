use crate::bbox::BBox;

/// Area of `target` covered by the union of `regions`, by coordinate
/// compression over the clipped rectangles.
pub fn covered_area(target: &BBox, regions: &[BBox]) -> f64 {
    let clipped: Vec<BBox> = regions
        .iter()
        .filter_map(|r| r.intersection(target))
        .collect();
    if clipped.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = clipped.iter().flat_map(|b| [b.x, b.right()]).collect();
    let mut ys: Vec<f64> = clipped.iter().flat_map(|b| [b.y, b.bottom()]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut area = 0.0;
    for xw in xs.windows(2) {
        let mx = (xw[0] + xw[1]) / 2.0;
        for yw in ys.windows(2) {
            let my = (yw[0] + yw[1]) / 2.0;
            if clipped.iter().any(|b| b.contains_point(mx, my)) {
                area += (xw[1] - xw[0]) * (yw[1] - yw[0]);
            }
        }
    }
    area
}

/// Fraction of ground-truth boxes with at least `min_inside` of their area
/// inside the union of proposal regions; 1.0 when `gt` is empty.
pub fn proposal_coverage_with(proposals: &[BBox], gt: &[BBox], min_inside: f64) -> f64 {
    if gt.is_empty() {
        return 1.0;
    }
    let covered = gt
        .iter()
        .filter(|g| g.area() > 0.0 && covered_area(g, proposals) >= min_inside * g.area() - 1e-9)
        .count();
    covered as f64 / gt.len() as f64
}

pub const DEFAULT_COVERAGE_FRACTION: f64 = 0.95;

pub fn proposal_coverage(proposals: &[BBox], gt: &[BBox]) -> f64 {
    proposal_coverage_with(proposals, gt, DEFAULT_COVERAGE_FRACTION)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_cases() {
        let gt = [BBox::new(5.0, 5.0, 10.0, 10.0)];
        assert_eq!(
            proposal_coverage(&[BBox::new(0.0, 0.0, 100.0, 100.0)], &gt),
            1.0
        );
        assert_eq!(proposal_coverage(&[], &gt), 0.0);
        assert_eq!(proposal_coverage(&[], &[]), 1.0);
    }

    #[test]
    fn overlapping_regions_counted_once() {
        let t = BBox::new(0.0, 0.0, 10.0, 10.0);
        let r = [
            BBox::new(0.0, 0.0, 6.0, 10.0),
            BBox::new(4.0, 0.0, 6.0, 10.0),
        ];
        assert!((covered_area(&t, &r) - 100.0).abs() < 1e-9);
    }
}
