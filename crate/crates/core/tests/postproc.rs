use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uhrbar::postproc::{
    binarize, boxes_from_mask, erode, extract_contours, fit_and_expand, PostprocParams,
};
use uhrbar::synth::{compose_scene, SceneConfig};
use uhrbar::{BinaryMask, ProbMap};

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(p))
}

fn naive_erode_once(m: &BinaryMask) -> BinaryMask {
    BinaryMask::from_fn(m.width(), m.height(), |x, y| {
        (-1..=1).all(|dy| (-1..=1).all(|dx| m.get_signed(x as i64 + dx, y as i64 + dy)))
    })
}

/// 8-connected components as `(pixel count, x0, y0, x1, y1)`, labelled by
/// repeated relaxation instead of a stack.
fn components(m: &BinaryMask) -> Vec<(usize, usize, usize, usize, usize)> {
    let (w, h) = (m.width(), m.height());
    let mut label: Vec<usize> = (0..w * h).collect();
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                if !m.get(x, y) {
                    continue;
                }
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if m.get_signed(nx, ny) {
                            let j = ny as usize * w + nx as usize;
                            if label[j] < label[y * w + x] {
                                label[y * w + x] = label[j];
                                changed = true;
                            }
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut out: std::collections::BTreeMap<usize, (usize, usize, usize, usize, usize)> =
        Default::default();
    for y in 0..h {
        for x in 0..w {
            if m.get(x, y) {
                let e = out.entry(label[y * w + x]).or_insert((0, x, y, x, y));
                e.0 += 1;
                e.1 = e.1.min(x);
                e.2 = e.2.min(y);
                e.3 = e.3.max(x);
                e.4 = e.4.max(y);
            }
        }
    }
    out.into_values().collect()
}

#[test]
fn binarize_counts_values_at_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let prob = ProbMap::from_fn(31, 17, |_, _| (rng.random_range(0..11) as f32) / 10.0);
    let m = binarize(&prob, 0.5);
    assert_eq!(
        m.count_ones(),
        prob.data().iter().filter(|&&v| v as f64 >= 0.5).count()
    );
    assert_eq!(binarize(&ProbMap::filled(4, 4, 0.5), 0.5).count_ones(), 16);
}

#[test]
fn erosion_matches_definition_and_composes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..40 {
        let m = random_mask(&mut rng, 23, 19, 0.85);
        let mut reference = m.clone();
        for k in 0..4 {
            assert_eq!(erode(&m, k), reference, "k={k}");
            reference = naive_erode_once(&reference);
        }
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(erode(&m, a + b), erode(&erode(&m, a), b));
            }
        }
        let e = erode(&m, 1);
        assert!((0..19).all(|y| (0..23).all(|x| !e.get(x, y) || m.get(x, y))));
    }
}

#[test]
fn erosion_widens_a_one_pixel_gap_to_three() {
    let m = BinaryMask::from_fn(50, 30, |x, y| {
        (2..22).contains(&y) && ((2..22).contains(&x) || (23..43).contains(&x))
    });
    let e = erode(&m, 1);
    let comps = components(&e);
    assert_eq!(comps.len(), 2);
    assert_eq!(comps[1].1 - comps[0].3 - 1, 3);
    assert_eq!(erode(&BinaryMask::new(7, 7), 3), BinaryMask::new(7, 7));
}

#[test]
fn contours_match_component_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..60 {
        let m = random_mask(&mut rng, 29, 21, if trial % 2 == 0 { 0.3 } else { 0.55 });
        let contours = extract_contours(&m);
        let comps = components(&m);
        assert_eq!(contours.len(), comps.len());
        let mut got: Vec<_> = contours.iter().map(|c| c.extents()).collect();
        let mut want: Vec<_> = comps.iter().map(|c| (c.1, c.2, c.3, c.4)).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
        for c in &contours {
            let n = c.points.len();
            for i in 0..n {
                let (a, b) = (c.points[i], c.points[(i + 1) % n]);
                assert!(m.get(a.0, a.1));
                assert!(a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1);
            }
        }
    }
    assert!(extract_contours(&BinaryMask::new(5, 5)).is_empty());
}

#[test]
fn separated_components_survive_erosion() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 1..=2usize {
        let sep = 2 * k + 1;
        for _ in 0..30 {
            let mut rects: Vec<(usize, usize, usize, usize)> = Vec::new();
            for _ in 0..40 {
                let (w, h) = (
                    rng.random_range(2 * k + 1..12),
                    rng.random_range(2 * k + 1..12),
                );
                let (x, y) = (rng.random_range(0..60 - w), rng.random_range(0..50 - h));
                let r = (x, y, x + w - 1, y + h - 1);
                let far = rects.iter().all(|o| {
                    r.0 > o.2 + sep || o.0 > r.2 + sep || r.1 > o.3 + sep || o.1 > r.3 + sep
                });
                if far {
                    rects.push(r);
                }
            }
            let m = BinaryMask::from_fn(60, 50, |x, y| {
                rects
                    .iter()
                    .any(|r| x >= r.0 && x <= r.2 && y >= r.1 && y <= r.3)
            });
            assert_eq!(components(&m).len(), rects.len());
            assert_eq!(components(&erode(&m, k)).len(), rects.len());
        }
    }
}

#[test]
fn fitted_boxes_stay_inside_mask_hull() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = PostprocParams {
        min_area: 0.0,
        ..Default::default()
    };
    for _ in 0..30 {
        let m = random_mask(&mut rng, 40, 30, 0.8);
        let comps = components(&m);
        if comps.is_empty() {
            continue;
        }
        let hull = (
            comps.iter().map(|c| c.1).min().unwrap(),
            comps.iter().map(|c| c.2).min().unwrap(),
            comps.iter().map(|c| c.3).max().unwrap(),
            comps.iter().map(|c| c.4).max().unwrap(),
        );
        let pre = PostprocParams {
            margin: 0,
            ..params.clone()
        };
        for b in fit_and_expand(&extract_contours(&erode(&m, 2)), &pre, 40, 30) {
            assert!(b.x >= hull.0 as f64 && b.y >= hull.1 as f64);
            assert!(b.right() <= (hull.2 + 1) as f64 && b.bottom() <= (hull.3 + 1) as f64);
        }
        assert_eq!(boxes_from_mask(&m, &params), boxes_from_mask(&m, &params));
    }
}

#[test]
fn generated_masks_recover_instance_boxes() {
    let cfg = SceneConfig {
        uhr_size: (640, 640),
        lr_size: (64, 64),
        module_px: (1, 2),
        lambda: 3.0,
        seed: 17,
        ..Default::default()
    };
    let params = PostprocParams::default();
    for id in 0..12 {
        let scene = compose_scene(&cfg, id).unwrap();
        let boxes = boxes_from_mask(&BinaryMask::from_labels(&scene.mask), &params);
        assert_eq!(boxes.len(), scene.instances.len(), "scene {id}");
        for inst in &scene.instances {
            let best = boxes.iter().map(|b| b.iou(&inst.bbox)).fold(0.0, f64::max);
            assert!(
                best >= 0.9,
                "scene {id}: instance {} best IoU {best}",
                inst.instance_id
            );
        }
    }
}

#[test]
fn overlapping_instances_merge_into_one_box() {
    let m = BinaryMask::from_fn(120, 90, |x, y| {
        ((10..60).contains(&x) && (10..50).contains(&y))
            || ((45..100).contains(&x) && (35..80).contains(&y))
    });
    let boxes = boxes_from_mask(&m, &PostprocParams::default());
    assert_eq!(boxes.len(), 1);
    assert_eq!(
        (boxes[0].x, boxes[0].y, boxes[0].right(), boxes[0].bottom()),
        (10.0, 10.0, 100.0, 80.0)
    );
}
