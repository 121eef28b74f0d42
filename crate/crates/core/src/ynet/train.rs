//! Mini-batch training of Y-Net with binary cross-entropy and L2.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{bce_loss, optimizer_step, OptState, OptimizerHyper, OptimizerRegistry, Tensor};
use crate::raster::{BinaryMask, GrayImage};

use super::model::YNetModel;
use super::YNetError;

/// One (crop, ground-truth mask) pair.
#[derive(Clone, Debug)]
pub struct SegSample {
    pub image: GrayImage,
    pub mask: BinaryMask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerHyper,
    pub seed: u64,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
    /// Stop once an epoch's training pixel accuracy reaches this value.
    pub target_train_accuracy: Option<f64>,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 4,
            optimizer: OptimizerHyper::adam(1e-3),
            seed: 0,
            split: [0.8, 0.1, 0.1],
            target_train_accuracy: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_pixel_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_pixel_accuracy: Option<f64>,
    pub seconds: f64,
}

impl TrainRecord {
    /// The record with wall-clock time removed, for reproducibility checks.
    pub fn without_timing(&self) -> TrainRecord {
        TrainRecord {
            seconds: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<TrainRecord>,
    pub best: YNetModel<f32>,
    pub best_epoch: usize,
    pub final_model: YNetModel<f32>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Deterministic shuffled split of `0..n` by fractions.
pub fn split_indices(n: usize, split: [f64; 3], seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let total: f64 = split.iter().sum();
    let n_train = ((split[0] / total) * n as f64).round() as usize;
    let n_val = (((split[1] / total) * n as f64).floor() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    (idx, val, test)
}

fn batch_tensors(samples: &[SegSample], indices: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
    let s = &samples[indices[0]];
    let (w, h) = (s.image.width(), s.image.height());
    let mut x = Vec::with_capacity(indices.len() * w * h);
    let mut t = Vec::with_capacity(indices.len() * w * h);
    for &i in indices {
        x.extend(samples[i].image.data().iter().map(|&v| v as f32 / 255.0));
        t.extend(samples[i].mask.bits().iter().map(|&v| v as f32));
    }
    let shape = [indices.len(), 1, h, w];
    (
        Tensor::new(&shape, x).expect("batch"),
        Tensor::new(&shape, t).expect("batch"),
    )
}

fn pixel_hits(prob: &Tensor<f32>, target: &Tensor<f32>) -> usize {
    prob.data()
        .iter()
        .zip(target.data())
        .filter(|(&p, &t)| (p >= 0.5) == (t >= 0.5))
        .count()
}

/// Mean BCE and pixel accuracy over `indices`, evaluated in batches.
pub fn evaluate(
    model: &YNetModel<f32>,
    samples: &[SegSample],
    indices: &[usize],
    batch: usize,
) -> Result<(f64, f64), YNetError> {
    let (mut loss, mut hits, mut total) = (0.0, 0usize, 0usize);
    for chunk in indices.chunks(batch.max(1)) {
        let (x, t) = batch_tensors(samples, chunk);
        let prob = model.forward(&x)?;
        let out = bce_loss(&prob, &t, 0.0, &[])?;
        loss += out.loss as f64 * t.len() as f64;
        hits += pixel_hits(&prob, &t);
        total += t.len();
    }
    Ok((loss / total as f64, hits as f64 / total as f64))
}

fn validate_samples(model: &YNetModel<f32>, samples: &[SegSample]) -> Result<(), YNetError> {
    if samples.is_empty() {
        return Err(YNetError::EmptyDataset);
    }
    let s = model.config().input_size;
    for (i, smp) in samples.iter().enumerate() {
        if smp.image.width() != s
            || smp.image.height() != s
            || smp.mask.width() != s
            || smp.mask.height() != s
        {
            return Err(YNetError::Dataset(format!("sample {i} is not {s}x{s}")));
        }
    }
    Ok(())
}

/// Trains `model` and returns per-epoch records plus the model with the
/// lowest validation loss (training loss when the validation split is
/// empty). Single-threaded and deterministic for a fixed seed.
pub fn train_ynet(
    model: YNetModel<f32>,
    samples: &[SegSample],
    hyper: &TrainHyper,
) -> Result<TrainOutcome, YNetError> {
    validate_samples(&model, samples)?;
    let (train_idx, val_idx, test_idx) = split_indices(samples.len(), hyper.split, hyper.seed);
    if train_idx.is_empty() {
        return Err(YNetError::Dataset("training split is empty".into()));
    }
    let mut warnings = Vec::new();
    if val_idx.is_empty() {
        let msg = format!(
            "validation split is empty ({} samples); selecting on training loss",
            samples.len()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let registry = OptimizerRegistry::<f32>::default();
    registry.get(&hyper.optimizer.kind)?;
    let l2 = model.config().l2_strength as f32;
    let mut model = model;
    let mut state = OptState::default();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(1));
    let mut order = train_idx.clone();
    let mut records = Vec::new();
    let mut best: Option<(f64, usize, YNetModel<f32>)> = None;

    for epoch in 0..hyper.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut batches, mut hits, mut total) = (0.0f64, 0usize, 0usize, 0usize);
        for (b, chunk) in order.chunks(hyper.batch_size.max(1)).enumerate() {
            let (x, t) = batch_tensors(samples, chunk);
            let cache = model.forward_cached(&x)?;
            let penalised: Vec<&Tensor<f32>> = model
                .params()
                .iter()
                .filter(|(n, _)| YNetModel::<f32>::is_penalised(n))
                .map(|(_, t)| t)
                .collect();
            let out = bce_loss(&cache.prob, &t, l2, &penalised)?;
            if !out.loss.is_finite() {
                return Err(YNetError::NonFiniteLoss { epoch, batch: b });
            }
            // d BCE / d logit of a sigmoid output is (p - t) / N
            let n = t.len() as f32;
            let grad_logits = cache.prob.zip_map(&t, |p, t| (p - t) / n)?;
            let (mut grads, _) = model.backward(&cache, &grad_logits)?;
            let mut l2_iter = out.grad_l2.iter();
            for (name, g) in grads.iter_mut() {
                if YNetModel::<f32>::is_penalised(name) {
                    g.add_assign(
                        l2_iter
                            .next()
                            .expect("one L2 gradient per penalised weight"),
                    )?;
                }
            }
            optimizer_step(
                &registry,
                model.params_mut(),
                &grads,
                &mut state,
                &hyper.optimizer,
            )
            .map_err(|e| match e {
                crate::nn::NnError::NonFinite(_) => YNetError::NonFiniteLoss { epoch, batch: b },
                other => other.into(),
            })?;
            loss_sum += out.loss as f64;
            batches += 1;
            hits += pixel_hits(&cache.prob, &t);
            total += t.len();
        }
        let train_loss = loss_sum / batches as f64;
        let train_acc = hits as f64 / total as f64;
        let (val_loss, val_acc) = if val_idx.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&model, samples, &val_idx, hyper.batch_size)?;
            (Some(l), Some(a))
        };
        records.push(TrainRecord {
            epoch,
            train_loss,
            train_pixel_accuracy: train_acc,
            val_loss,
            val_pixel_accuracy: val_acc,
            seconds: started.elapsed().as_secs_f64(),
        });
        log::debug!(
            "epoch {epoch}: train loss {train_loss:.5} acc {train_acc:.4} val {val_loss:?}"
        );

        let selection = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(l, _, _)| selection < *l) {
            best = Some((selection, epoch, model.clone()));
        }
        if hyper
            .target_train_accuracy
            .is_some_and(|target| train_acc >= target)
        {
            break;
        }
    }
    let (_, best_epoch, best_model) = match best {
        Some(b) => b,
        None => (f64::INFINITY, 0, model.clone()),
    };
    Ok(TrainOutcome {
        records,
        best: best_model,
        best_epoch,
        final_model: model,
        train_indices: train_idx,
        val_indices: val_idx,
        test_indices: test_idx,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_proportions() {
        let (a, b, c) = split_indices(100, [0.8, 0.1, 0.1], 1);
        assert_eq!((a.len(), b.len(), c.len()), (80, 10, 10));
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (a, b, c) = split_indices(3, [0.8, 0.1, 0.1], 1);
        assert_eq!((a.len(), b.len(), c.len()), (2, 0, 1));
        let (a, b, _) = split_indices(8, [1.0, 0.0, 0.0], 1);
        assert_eq!((a.len(), b.len()), (8, 0));
    }
}
