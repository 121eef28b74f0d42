use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::nn::{
    optimizer_step, sigmoid, OptState, OptimizerHyper, OptimizerRegistry, Tensor, BCE_EPS,
};
use crate::raster::GrayImage;

use super::dihedral::{dihedral_box, dihedral_image};
use super::net::{ProposalNet, HEAD_CHANNELS};
use super::RpnError;

/// One LR scene with ground-truth boxes in LR coordinates.
#[derive(Clone, Debug)]
pub struct ProposalSample {
    pub lr: GrayImage,
    pub boxes: Vec<BBox>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PNetHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerHyper,
    pub seed: u64,
    /// Weight of positive cells in the objectness BCE.
    pub pos_weight: f64,
    /// Weight of the L1 box term.
    pub box_weight: f64,
    /// Apply a random flip or transpose to each scene every epoch.
    pub augment: bool,
}

impl Default for PNetHyper {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 8,
            optimizer: OptimizerHyper::adam(2e-3),
            seed: 0,
            pos_weight: 4.0,
            box_weight: 1.0,
            augment: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PNetRecord {
    pub epoch: usize,
    pub objectness_loss: f64,
    pub box_loss: f64,
}

/// Per-cell regression targets. A cell is positive when its centre lies
/// inside a box, and the cell holding a box centre is always positive;
/// where boxes compete for a cell the smaller box wins.
#[derive(Clone, Debug, PartialEq)]
pub struct CellTargets {
    pub positive: Vec<bool>,
    /// `[dx, dy, log(w / cell), log(h / cell)]` per cell, with `(dx, dy)`
    /// the box centre relative to the cell's top-left corner in cells.
    pub offsets: Vec<[f32; 4]>,
}

pub fn cell_targets(boxes: &[BBox], grid: usize, cell: usize) -> CellTargets {
    let mut positive = vec![false; grid * grid];
    let mut offsets = vec![[0.0f32; 4]; grid * grid];
    let mut owner_area = vec![f64::INFINITY; grid * grid];
    let c = cell as f64;
    for b in boxes.iter().filter(|b| b.is_valid()) {
        let (cx, cy) = b.center();
        let centre_cell = (
            ((cx / c).floor().max(0.0) as usize).min(grid - 1),
            ((cy / c).floor().max(0.0) as usize).min(grid - 1),
        );
        for gy in 0..grid {
            for gx in 0..grid {
                let inside = b.contains_point((gx as f64 + 0.5) * c, (gy as f64 + 0.5) * c);
                if !inside && (gx, gy) != centre_cell {
                    continue;
                }
                let i = gy * grid + gx;
                if owner_area[i] <= b.area() {
                    continue;
                }
                positive[i] = true;
                owner_area[i] = b.area();
                offsets[i] = [
                    (cx / c - gx as f64) as f32,
                    (cy / c - gy as f64) as f32,
                    (b.w / c).ln() as f32,
                    (b.h / c).ln() as f32,
                ];
            }
        }
    }
    CellTargets { positive, offsets }
}

struct BatchLoss {
    objectness: f64,
    boxes: f64,
    grad: Tensor<f32>,
}

fn batch_loss(head: &Tensor<f32>, targets: &[&CellTargets], hyper: &PNetHyper) -> BatchLoss {
    let (n, _, gh, gw) = head.dims4().expect("head is 4-D");
    let plane = gh * gw;
    let cells = (n * plane) as f64;
    let npos = targets
        .iter()
        .map(|t| t.positive.iter().filter(|&&p| p).count())
        .sum::<usize>()
        .max(1) as f64;
    let mut grad = Tensor::zeros(head.shape());
    let (mut obj, mut bl) = (0.0f64, 0.0f64);
    let pw = hyper.pos_weight;
    for (b, t) in targets.iter().enumerate() {
        let base = b * HEAD_CHANNELS * plane;
        for i in 0..plane {
            let logit = head.data()[base + i] as f64;
            let p = sigmoid(logit).clamp(BCE_EPS, 1.0 - BCE_EPS);
            let g = if t.positive[i] {
                obj -= pw * p.ln();
                pw * (p - 1.0)
            } else {
                obj -= (1.0 - p).ln();
                p
            };
            grad.data_mut()[base + i] = (g / cells) as f32;
            if t.positive[i] {
                for k in 0..4 {
                    let idx = base + (k + 1) * plane + i;
                    let d = head.data()[idx] - t.offsets[i][k];
                    bl += d.abs() as f64;
                    let s = if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    grad.data_mut()[idx] = (hyper.box_weight * s / npos) as f32;
                }
            }
        }
    }
    BatchLoss {
        objectness: obj / cells,
        boxes: bl / npos,
        grad,
    }
}

/// The scene under symmetry `d` of the square (see [`dihedral_image`]).
pub fn dihedral_sample(sample: &ProposalSample, d: u8) -> ProposalSample {
    let e = sample.lr.width() as f64;
    ProposalSample {
        lr: dihedral_image(&sample.lr, d),
        boxes: sample.boxes.iter().map(|b| dihedral_box(b, e, d)).collect(),
    }
}

fn batch_input(samples: &[ProposalSample], size: usize) -> Tensor<f32> {
    let mut x = Vec::with_capacity(samples.len() * size * size);
    for s in samples {
        x.extend(s.lr.data().iter().map(|&v| v as f32 / 255.0));
    }
    Tensor::new(&[samples.len(), 1, size, size], x).expect("batch")
}

/// Trains the proposal net with weighted objectness BCE plus L1 on the
/// box offsets of positive cells. Deterministic for a fixed seed.
pub fn train_proposal_net(
    mut net: ProposalNet<f32>,
    samples: &[ProposalSample],
    hyper: &PNetHyper,
) -> Result<(ProposalNet<f32>, Vec<PNetRecord>), RpnError> {
    if samples.is_empty() {
        return Err(RpnError::Dataset("no training scenes".into()));
    }
    let size = net.config().input_size;
    if let Some((i, _)) = samples
        .iter()
        .enumerate()
        .find(|(_, s)| s.lr.width() != size || s.lr.height() != size)
    {
        return Err(RpnError::Dataset(format!("scene {i} is not {size}x{size}")));
    }
    let (grid, cell) = (net.config().grid(), net.config().cell());
    let plain: Vec<CellTargets> = samples
        .iter()
        .map(|s| cell_targets(&s.boxes, grid, cell))
        .collect();
    let registry = OptimizerRegistry::<f32>::default();
    registry.get(&hyper.optimizer.kind)?;
    let mut state = OptState::default();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(7));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut records = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let (mut obj, mut bl, mut batches) = (0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(hyper.batch_size.max(1)).enumerate() {
            let batch: Vec<(ProposalSample, Option<CellTargets>)> = chunk
                .iter()
                .map(|&i| {
                    let d = if hyper.augment {
                        rng.random_range(0..8u8)
                    } else {
                        0
                    };
                    if d == 0 {
                        (samples[i].clone(), None)
                    } else {
                        let s = dihedral_sample(&samples[i], d);
                        let t = cell_targets(&s.boxes, grid, cell);
                        (s, Some(t))
                    }
                })
                .collect();
            let inputs: Vec<ProposalSample> = batch.iter().map(|(s, _)| s.clone()).collect();
            let x = batch_input(&inputs, size);
            let cache = net.forward_cached(&x)?;
            let t: Vec<&CellTargets> = batch
                .iter()
                .zip(chunk)
                .map(|((_, t), &i)| t.as_ref().unwrap_or(&plain[i]))
                .collect();
            let loss = batch_loss(&cache.head, &t, hyper);
            if !(loss.objectness.is_finite() && loss.boxes.is_finite()) {
                return Err(RpnError::NonFiniteLoss { epoch, batch: b });
            }
            let grads = net.backward(&cache, &loss.grad)?;
            optimizer_step(
                &registry,
                net.params_mut(),
                &grads,
                &mut state,
                &hyper.optimizer,
            )?;
            obj += loss.objectness;
            bl += loss.boxes;
            batches += 1;
        }
        let record = PNetRecord {
            epoch,
            objectness_loss: obj / batches as f64,
            box_loss: bl / batches as f64,
        };
        log::debug!("pnet epoch {epoch}: {record:?}");
        records.push(record);
    }
    Ok((net, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_cover_box_cells() {
        let t = cell_targets(&[BBox::new(20.0, 40.0, 32.0, 8.0)], 16, 16);
        // centre (36, 44) -> cell (2, 2); cell centres 24 and 40 lie inside in x, 40 in y
        assert_eq!(t.positive.iter().filter(|&&p| p).count(), 2);
        let o = t.offsets[2 * 16 + 2];
        assert!((o[0] - 0.25).abs() < 1e-6 && (o[1] - 0.75).abs() < 1e-6);
        assert!((o[2] - 2f32.ln()).abs() < 1e-6 && (o[3] - 0.5f32.ln()).abs() < 1e-6);
        let o = t.offsets[2 * 16 + 1];
        assert!((o[0] - 1.25).abs() < 1e-6);
    }

    #[test]
    fn dihedral_moves_pixels_and_boxes_together() {
        let mut lr = GrayImage::filled(16, 16, 255);
        for y in 2..5 {
            for x in 9..15 {
                lr.set(x, y, 0);
            }
        }
        let s = ProposalSample {
            lr,
            boxes: vec![BBox::new(9.0, 2.0, 6.0, 3.0)],
        };
        for d in 0..8 {
            let t = dihedral_sample(&s, d);
            let b = t.boxes[0];
            let dark = (0..16)
                .flat_map(|y| (0..16).map(move |x| (x, y)))
                .filter(|&(x, y)| t.lr.get(x, y) == 0);
            let (mut x0, mut y0, mut x1, mut y1) = (16, 16, 0, 0);
            for (x, y) in dark {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
            assert_eq!(
                b,
                BBox::new(x0 as f64, y0 as f64, (x1 - x0) as f64, (y1 - y0) as f64),
                "d = {d}"
            );
        }
    }

    #[test]
    fn tiny_box_still_owns_its_centre_cell() {
        let t = cell_targets(&[BBox::new(2.0, 2.0, 4.0, 4.0)], 16, 16);
        assert_eq!(t.positive.iter().filter(|&&p| p).count(), 1);
        assert!(t.positive[0]);
    }

    #[test]
    fn smaller_box_wins_shared_cells() {
        let big = BBox::new(0.0, 0.0, 64.0, 64.0);
        let small = BBox::new(16.0, 16.0, 16.0, 16.0);
        let t = cell_targets(&[small, big], 16, 16);
        let o = t.offsets[16 + 1];
        assert!((o[2] - 0.0).abs() < 1e-6);
        assert_eq!(t.positive.iter().filter(|&&p| p).count(), 16);
    }
}
