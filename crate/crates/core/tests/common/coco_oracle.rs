//! Exhaustive reference evaluator: every one-to-one assignment of ranked
//! detections to ground truth is enumerated, the greedy-equivalent one is
//! picked by lexicographic comparison, and the precision/recall integral is
//! taken directly from its definition.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use uhrbar::BBox;

fn overlap(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / (a.w * a.h + b.w * b.h - inter)
}

fn in_bucket(area: f64, lo: f64, hi: f64) -> bool {
    area >= lo && area < hi
}

type Key = (u8, f64, i64);

fn better(a: &[Key], b: &[Key]) -> bool {
    for (x, y) in a.iter().zip(b) {
        let o = x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2));
        if o.is_ne() {
            return o.is_gt();
        }
    }
    false
}

fn enumerate(
    k: usize,
    dets: &[BBox],
    gts: &[BBox],
    ig: &[bool],
    t: f64,
    used: &mut Vec<bool>,
    cur: &mut Vec<(Key, Option<usize>)>,
    best: &mut Option<Vec<(Key, Option<usize>)>>,
) {
    if k == dets.len() {
        let keys: Vec<Key> = cur.iter().map(|c| c.0).collect();
        let replace = match best {
            None => true,
            Some(b) => better(&keys, &b.iter().map(|c| c.0).collect::<Vec<_>>()),
        };
        if replace {
            *best = Some(cur.clone());
        }
        return;
    }
    cur.push(((0, -1.0, 0), None));
    enumerate(k + 1, dets, gts, ig, t, used, cur, best);
    cur.pop();
    for g in 0..gts.len() {
        if used[g] {
            continue;
        }
        let v = overlap(&dets[k], &gts[g]);
        if v < t {
            continue;
        }
        used[g] = true;
        cur.push(((if ig[g] { 1 } else { 2 }, v, -(g as i64)), Some(g)));
        enumerate(k + 1, dets, gts, ig, t, used, cur, best);
        cur.pop();
        used[g] = false;
    }
}

/// `(ap, recall)`; both -1 when the bucket has no ground truth.
pub fn oracle(
    images: &[(Vec<BBox>, Vec<BBox>)],
    t: f64,
    lo: f64,
    hi: f64,
    max_dets: usize,
) -> (f64, f64) {
    // (score, image, y, x, hit)
    let mut pool: Vec<(f64, usize, f64, f64, bool)> = Vec::new();
    let mut npos = 0;
    for (i, (gts, dets)) in images.iter().enumerate() {
        let mut ranked = dets.clone();
        ranked.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.y.total_cmp(&b.y))
                .then(a.x.total_cmp(&b.x))
        });
        ranked.truncate(max_dets);
        let ig: Vec<bool> = gts.iter().map(|g| !in_bucket(g.w * g.h, lo, hi)).collect();
        npos += ig.iter().filter(|v| !**v).count();
        let mut best = None;
        enumerate(
            0,
            &ranked,
            gts,
            &ig,
            t,
            &mut vec![false; gts.len()],
            &mut Vec::new(),
            &mut best,
        );
        for (d, (_, m)) in ranked.iter().zip(best.unwrap()) {
            let skip = match m {
                Some(g) => ig[g],
                None => !in_bucket(d.w * d.h, lo, hi),
            };
            if !skip {
                pool.push((d.score, i, d.y, d.x, m.is_some()));
            }
        }
    }
    if npos == 0 {
        return (-1.0, -1.0);
    }
    pool.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
            .then(a.3.total_cmp(&b.3))
    });
    let mut pr = Vec::new();
    let mut tp = 0;
    for (k, p) in pool.iter().enumerate() {
        tp += p.4 as usize;
        pr.push((tp as f64 / (k + 1) as f64, tp as f64 / npos as f64));
    }
    let mut sum = 0.0;
    for r in 0..=100 {
        let level = r as f64 / 100.0;
        sum += pr
            .iter()
            .filter(|p| p.1 >= level)
            .map(|p| p.0)
            .fold(0.0, f64::max);
    }
    (sum / 101.0, pr.last().map_or(0.0, |p| p.1))
}

/// Up to three images with at most 4 GT boxes and 6 detections each;
/// scores come from a small set so ties occur.
pub fn random_case(rng: &mut ChaCha8Rng) -> Vec<(Vec<BBox>, Vec<BBox>)> {
    let n_images = rng.random_range(1..=3);
    (0..n_images)
        .map(|_| {
            let gts: Vec<BBox> = (0..rng.random_range(0..=4))
                .map(|_| {
                    BBox::new(
                        rng.random_range(0.0..60.0),
                        rng.random_range(0.0..60.0),
                        rng.random_range(10.0..110.0),
                        rng.random_range(10.0..110.0),
                    )
                })
                .collect();
            let dets = (0..rng.random_range(0..=6))
                .map(|_| {
                    let b = if !gts.is_empty() && rng.random_bool(0.7) {
                        let g = gts[rng.random_range(0..gts.len())];
                        BBox::new(
                            g.x + rng.random_range(-8.0..8.0),
                            g.y + rng.random_range(-8.0..8.0),
                            g.w * rng.random_range(0.7..1.3),
                            g.h * rng.random_range(0.7..1.3),
                        )
                    } else {
                        BBox::new(
                            rng.random_range(0.0..80.0),
                            rng.random_range(0.0..80.0),
                            rng.random_range(10.0..100.0),
                            rng.random_range(10.0..100.0),
                        )
                    };
                    b.with_score((rng.random_range(0..8) as f64) / 8.0 + 0.05)
                })
                .collect();
            (gts, dets)
        })
        .collect()
}
