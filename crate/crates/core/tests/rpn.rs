use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uhrbar::rpn::{
    downscale, nms, proposal_coverage, remap_and_crop, train_proposal_net, CropParams, PNetConfig,
    PNetHyper, ProposalNet, ProposalSample, ScaleMap,
};
use uhrbar::{BBox, GrayImage};

#[test]
fn dark_patch_maps_to_block_mean() {
    let uhr = GrayImage::from_fn(10240, 10240, |x, y| {
        if (4000..4400).contains(&x) && (2000..2400).contains(&y) {
            0
        } else {
            255
        }
    });
    let (lr, _) = downscale(&uhr);
    // 40x40 source blocks: LR pixel (i, j) is the mean of its block
    for j in 0..256 {
        for i in 0..256 {
            let dark = (100..110).contains(&i) && (50..60).contains(&j);
            assert_eq!(lr.get(i, j), if dark { 0 } else { 255 }, "({i}, {j})");
        }
    }
}

#[test]
fn scale_map_round_trips_corners() {
    for (w, h) in [(4096, 4096), (10240, 7000), (3000, 5000), (300, 1000)] {
        let (_, map) = downscale(&GrayImage::filled(w, h, 255));
        for (x, y) in [
            (0.0, 0.0),
            (w as f64, 0.0),
            (0.0, h as f64),
            (w as f64, h as f64),
        ] {
            let (lx, ly) = map.to_lr(x, y);
            let (ux, uy) = map.to_uhr(lx, ly);
            assert!((ux - x).abs() <= 0.5 && (uy - y).abs() <= 0.5);
        }
    }
}

fn pairwise_nms(boxes: &[BBox], thr: f64) -> Vec<BBox> {
    let mut sorted = boxes.to_vec();
    sorted.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.x.total_cmp(&b.x))
            .then(a.y.total_cmp(&b.y))
            .then(a.w.total_cmp(&b.w))
            .then(a.h.total_cmp(&b.h))
    });
    let mut keep: Vec<BBox> = Vec::new();
    for b in sorted {
        if keep.iter().all(|k| {
            let iw = (k.x + k.w).min(b.x + b.w) - k.x.max(b.x);
            let ih = (k.y + k.h).min(b.y + b.h) - k.y.max(b.y);
            let inter = if iw > 0.0 && ih > 0.0 { iw * ih } else { 0.0 };
            inter / (k.w * k.h + b.w * b.h - inter) <= thr
        }) {
            keep.push(b);
        }
    }
    keep
}

#[test]
fn nms_matches_pairwise_oracle_and_ignores_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let mut boxes: Vec<BBox> = (0..rng.random_range(1..12))
            .map(|_| {
                BBox::new(
                    rng.random_range(0..40) as f64,
                    rng.random_range(0..40) as f64,
                    rng.random_range(5..30) as f64,
                    rng.random_range(5..30) as f64,
                )
                .with_score(rng.random_range(1..5) as f64 / 5.0)
            })
            .collect();
        let want = pairwise_nms(&boxes, 0.5);
        assert_eq!(nms(&boxes, 0.5), want);
        boxes.shuffle(&mut rng);
        assert_eq!(nms(&boxes, 0.5), want);
    }
}

#[test]
fn crops_cover_every_region() {
    let uhr = GrayImage::filled(4096, 3000, 200);
    let (_, map) = downscale(&uhr);
    let params = CropParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let proposals: Vec<BBox> = (0..40)
        .map(|_| {
            BBox::new(
                rng.random_range(-5.0..250.0),
                rng.random_range(-5.0..250.0),
                rng.random_range(1.0..90.0),
                rng.random_range(1.0..90.0),
            )
        })
        .collect();
    let set = remap_and_crop(&uhr, &proposals, &map, &params);
    assert_eq!(set.regions.len() + set.dropped, proposals.len());
    for (r, region) in set.regions.iter().enumerate() {
        let tiles: Vec<BBox> = set
            .crops
            .iter()
            .filter(|c| c.region == r)
            .map(|c| c.footprint)
            .collect();
        assert!(
            (uhr_covered(region, &tiles) - region.area()).abs() < 1e-6,
            "region {r} has a hole"
        );
        assert!(
            region.x >= 0.0
                && region.y >= 0.0
                && region.right() <= 4096.0
                && region.bottom() <= 3000.0
        );
    }
    for c in &set.crops {
        assert_eq!((c.image.width(), c.image.height()), (400, 400));
    }
}

/// Area of `target` covered by `tiles`, counted on the integer pixel grid.
fn uhr_covered(target: &BBox, tiles: &[BBox]) -> f64 {
    let (x0, y0, x1, y1) = (
        target.x.floor() as i64,
        target.y.floor() as i64,
        target.right().ceil() as i64,
        target.bottom().ceil() as i64,
    );
    let mut n = 0.0;
    for y in y0..y1 {
        for x in (x0..x1).step_by(1) {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            if tiles.iter().any(|t| t.contains_point(cx, cy)) {
                n += (target.right().min(x as f64 + 1.0) - target.x.max(x as f64))
                    * (target.bottom().min(y as f64 + 1.0) - target.y.max(y as f64));
            }
        }
    }
    n
}

#[test]
fn corner_proposal_is_padded_white() {
    let uhr = GrayImage::filled(2560, 2560, 0);
    let map = ScaleMap::scaling((2560, 2560), (2560, 2560), (256, 256));
    let set = remap_and_crop(
        &uhr,
        &[BBox::new(0.0, 0.0, 5.0, 5.0)],
        &map,
        &CropParams::default(),
    );
    let c = &set.crops[0];
    assert!(c.origin.0 < 0 && c.origin.1 < 0);
    assert_eq!(c.image.get(0, 0), 255);
    assert_eq!((c.footprint.x, c.footprint.y), (0.0, 0.0));
}

#[test]
fn coverage_against_raster_oracle() {
    let gts = vec![
        BBox::new(10.0, 10.0, 20.0, 20.0),
        BBox::new(100.0, 10.0, 20.0, 20.0),
        BBox::new(10.0, 100.0, 20.0, 20.0),
        BBox::new(100.0, 100.0, 20.0, 20.0),
    ];
    let props = vec![
        BBox::new(0.0, 0.0, 60.0, 40.0),
        BBox::new(90.0, 95.0, 40.0, 40.0),
        BBox::new(0.0, 90.0, 25.0, 40.0),
    ];
    assert_eq!(proposal_coverage(&props, &gts), 0.5);
    assert_eq!(proposal_coverage(&[], &gts), 0.0);
    assert_eq!(
        proposal_coverage(&[BBox::new(0.0, 0.0, 200.0, 200.0)], &gts),
        1.0
    );
    assert_eq!(proposal_coverage(&props, &[]), 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let gts: Vec<BBox> = (0..6)
            .map(|_| {
                BBox::new(
                    rng.random_range(0..80) as f64,
                    rng.random_range(0..80) as f64,
                    rng.random_range(4..20) as f64,
                    rng.random_range(4..20) as f64,
                )
            })
            .collect();
        let mut props = Vec::new();
        let mut last = 0.0;
        for _ in 0..8 {
            props.push(BBox::new(
                rng.random_range(0..80) as f64,
                rng.random_range(0..80) as f64,
                rng.random_range(5..40) as f64,
                rng.random_range(5..40) as f64,
            ));
            let c = proposal_coverage(&props, &gts);
            assert!(c >= last);
            last = c;
            let raster = gts
                .iter()
                .filter(|g| uhr_covered(g, &props) >= 0.95 * g.area())
                .count() as f64
                / gts.len() as f64;
            assert_eq!(c, raster);
        }
    }
}

fn tiny_config() -> PNetConfig {
    PNetConfig {
        input_size: 64,
        channels: vec![4, 8, 16],
        kernel: 5,
        ..Default::default()
    }
}

fn blob_sample(rng: &mut ChaCha8Rng) -> ProposalSample {
    let (x, y) = (
        rng.random_range(4..44) as f64,
        rng.random_range(4..44) as f64,
    );
    let b = BBox::new(x, y, 14.0, 10.0);
    ProposalSample {
        lr: GrayImage::from_fn(64, 64, |px, py| {
            if b.contains_point(px as f64 + 0.5, py as f64 + 0.5) {
                20
            } else {
                255
            }
        }),
        boxes: vec![b],
    }
}

#[test]
fn empty_scenes_train_to_silence() {
    let net = ProposalNet::build(&tiny_config()).unwrap();
    let samples = vec![
        ProposalSample {
            lr: GrayImage::filled(64, 64, 255),
            boxes: vec![]
        };
        8
    ];
    let hyper = PNetHyper {
        epochs: 30,
        batch_size: 4,
        ..Default::default()
    };
    let (net, _) = train_proposal_net(net, &samples, &hyper).unwrap();
    assert!(net
        .propose(&GrayImage::filled(64, 64, 255))
        .unwrap()
        .is_empty());
}

#[test]
fn training_is_deterministic_and_learns_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let samples: Vec<ProposalSample> = (0..24).map(|_| blob_sample(&mut rng)).collect();
    let hyper = PNetHyper {
        epochs: 60,
        batch_size: 4,
        seed: 3,
        ..Default::default()
    };
    let (a, rec) = train_proposal_net(
        ProposalNet::build(&tiny_config()).unwrap(),
        &samples,
        &hyper,
    )
    .unwrap();
    let (b, _) = train_proposal_net(
        ProposalNet::build(&tiny_config()).unwrap(),
        &samples,
        &hyper,
    )
    .unwrap();
    assert_eq!(a.params(), b.params());
    assert!(rec.last().unwrap().objectness_loss < rec[0].objectness_loss);
    let test = blob_sample(&mut rng);
    let props = a.propose(&test.lr).unwrap();
    let (cx, cy) = test.boxes[0].center();
    assert!(
        props.iter().any(|p| p.contains_point(cx, cy)),
        "{props:?} vs {:?}",
        test.boxes[0]
    );
}
