//! Finite-difference verification of analytic gradients, plus a catalog of
//! every layer wrapped as a [`Differentiable`] so the whole set can be
//! checked by name.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::activation::{activation, activation_backward, Activation};
use super::conv::{
    conv2d, conv2d_backward, transposed_conv2d, transposed_conv2d_backward, ConvSpec,
};
use super::loss::bce_loss;
use super::pool::{
    adaptive_avg_pool2d, adaptive_avg_pool2d_backward, concat_channels, maxpool2d,
    maxpool2d_backward, split_channels, upsample_nearest, upsample_nearest_backward,
};
use super::tensor::Tensor;
use super::NnError;

/// A function of several tensors with an analytic vector-Jacobian product.
pub trait Differentiable: Send + Sync {
    fn name(&self) -> &str;

    fn forward(&self, inputs: &[Tensor<f64>]) -> Result<Tensor<f64>, NnError>;

    /// Gradient of `<grad_out, forward(inputs)>` with respect to each input.
    fn backward(
        &self,
        inputs: &[Tensor<f64>],
        grad_out: &Tensor<f64>,
    ) -> Result<Vec<Tensor<f64>>, NnError>;

    /// Random inputs suitable for checking this layer.
    fn sample_inputs(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>>;

    /// Fingerprint of the piecewise-linear regime at `inputs` (which ReLUs
    /// are active, which max-pool taps win). Probes whose two sides land in
    /// a different regime straddle a kink and are redrawn.
    fn regime(&self, _inputs: &[Tensor<f64>]) -> Result<Option<u64>, NnError> {
        Ok(None)
    }
}

/// Entries whose analytic and numeric gradients are both below this are
/// compared by absolute rather than relative error.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked_entries: usize,
    /// (input index, flat element index) of the worst entry.
    pub worst: (usize, usize),
    /// (analytic, numeric) at the worst entry.
    pub worst_values: (f64, f64),
    /// Probes abandoned because every redraw straddled a kink.
    pub skipped: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < GRAD_FLOOR {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Checks every element of every input.
pub fn grad_check(
    layer: &dyn Differentiable,
    inputs: &[Tensor<f64>],
    eps: f64,
) -> Result<GradCheckReport, NnError> {
    grad_check_sampled(layer, inputs, eps, usize::MAX, 0)
}

/// Like [`grad_check`] but probes at most `max_per_input` randomly chosen
/// elements of each input.
///
/// The scalar probe is `L = sum(r * forward(inputs))` for a fixed random
/// `r`; numeric derivatives are `(L(x+eps) - L(x-eps)) / (2 eps)`.
pub fn grad_check_sampled(
    layer: &dyn Differentiable,
    inputs: &[Tensor<f64>],
    eps: f64,
    max_per_input: usize,
    seed: u64,
) -> Result<GradCheckReport, NnError> {
    let out = layer.forward(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let probe = Tensor::from_fn(out.shape(), |_| rng.random_range(-1.0..1.0));
    let analytic = layer.backward(inputs, &probe)?;
    if analytic.len() != inputs.len() {
        return Err(NnError::Shape(format!(
            "{}: backward returned {} gradients for {} inputs",
            layer.name(),
            analytic.len(),
            inputs.len()
        )));
    }
    let loss = |xs: &[Tensor<f64>]| -> Result<f64, NnError> { layer.forward(xs)?.dot(&probe) };

    let mut work = inputs.to_vec();
    let mut report = GradCheckReport::default();
    for (i, grad) in analytic.iter().enumerate() {
        inputs[i].expect_same_shape(grad, "gradient")?;
        let n = inputs[i].len();
        let indices: Vec<usize> = if n <= max_per_input {
            (0..n).collect()
        } else {
            (0..max_per_input).map(|_| rng.random_range(0..n)).collect()
        };
        for idx in indices {
            let orig = work[i].data()[idx];
            work[i].data_mut()[idx] = orig + eps;
            let plus = loss(&work)?;
            work[i].data_mut()[idx] = orig - eps;
            let minus = loss(&work)?;
            work[i].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(grad.data()[idx], numeric);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (i, idx);
                report.worst_values = (grad.data()[idx], numeric);
            }
            report.checked_entries += 1;
        }
    }
    Ok(report)
}

/// Directional variant for large models: for each input, compares
/// `<grad, v>` against `(L(x + eps v) - L(x - eps v)) / (2 eps)` along
/// `directions` random unit directions. Per-element probes of tiny
/// gradients drown in the rounding noise of a large probe sum; a
/// directional derivative aggregates many entries and stays well above it.
///
/// Directions that cross a kink (see [`Differentiable::regime`]) are
/// redrawn up to `MAX_REDRAWS` times, then counted in `skipped`.
pub fn grad_check_directional(
    layer: &dyn Differentiable,
    inputs: &[Tensor<f64>],
    eps: f64,
    directions: usize,
    seed: u64,
) -> Result<GradCheckReport, NnError> {
    const MAX_REDRAWS: usize = 8;
    let out = layer.forward(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let probe = Tensor::from_fn(out.shape(), |_| rng.random_range(-1.0..1.0));
    let analytic = layer.backward(inputs, &probe)?;
    let base = layer.regime(inputs)?;
    let loss = |xs: &[Tensor<f64>]| -> Result<f64, NnError> { layer.forward(xs)?.dot(&probe) };
    let mut work = inputs.to_vec();
    let mut report = GradCheckReport::default();
    for (i, grad) in analytic.iter().enumerate() {
        inputs[i].expect_same_shape(grad, "gradient")?;
        for d in 0..directions {
            let mut measured = None;
            for _ in 0..MAX_REDRAWS {
                let v: Tensor<f64> =
                    Tensor::from_fn(inputs[i].shape(), |_| rng.random_range(-1.0..1.0));
                let v = v.scale(1.0 / v.sum_squares().sqrt());
                work[i] = inputs[i].zip_map(&v, |x, v| x + eps * v)?;
                let plus = loss(&work)?;
                let plus_regime = layer.regime(&work)?;
                work[i] = inputs[i].zip_map(&v, |x, v| x - eps * v)?;
                let minus = loss(&work)?;
                let minus_regime = layer.regime(&work)?;
                work[i] = inputs[i].clone();
                if plus_regime == base && minus_regime == base {
                    measured = Some((grad.dot(&v)?, (plus - minus) / (2.0 * eps)));
                    break;
                }
            }
            let Some((predicted, numeric)) = measured else {
                report.skipped += 1;
                continue;
            };
            let err = relative_error(predicted, numeric);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (i, d);
                report.worst_values = (predicted, numeric);
            }
            report.checked_entries += 1;
        }
    }
    Ok(report)
}

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Uniform values kept at least `gap` away from zero, so kinks at zero are
/// never straddled by a finite-difference probe.
fn away_from_zero(shape: &[usize], gap: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.random_range(gap..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Distinct values (a shuffled ramp plus jitter) so max-pool never ties.
fn distinct(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    Tensor::from_fn(shape, |i| {
        order[i] as f64 * 0.01 + rng.random_range(0.0..0.002)
    })
}

pub struct Conv2dLayer {
    pub spec: ConvSpec,
    pub input_hw: (usize, usize),
    pub batch: usize,
}

impl Differentiable for Conv2dLayer {
    fn name(&self) -> &str {
        "conv2d"
    }
    fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>, NnError> {
        conv2d(&x[0], &self.spec, &x[1], &x[2])
    }
    fn backward(&self, x: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, NnError> {
        let grads = conv2d_backward(&x[0], &self.spec, &x[1], g)?;
        Ok(vec![grads.input, grads.weights, grads.bias])
    }
    fn sample_inputs(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        let s = &self.spec;
        vec![
            uniform(
                &[self.batch, s.in_channels, self.input_hw.0, self.input_hw.1],
                rng,
            ),
            uniform(
                &[s.out_channels, s.in_channels, s.kernel.0, s.kernel.1],
                rng,
            ),
            uniform(&[s.out_channels], rng),
        ]
    }
}

pub struct TransposedConv2dLayer {
    pub spec: ConvSpec,
    pub input_hw: (usize, usize),
}

impl Differentiable for TransposedConv2dLayer {
    fn name(&self) -> &str {
        "transposed_conv2d"
    }
    fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>, NnError> {
        transposed_conv2d(&x[0], &self.spec, &x[1], &x[2])
    }
    fn backward(&self, x: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, NnError> {
        let grads = transposed_conv2d_backward(&x[0], &self.spec, &x[1], g)?;
        Ok(vec![grads.input, grads.weights, grads.bias])
    }
    fn sample_inputs(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        let s = &self.spec;
        vec![
            uniform(&[1, s.in_channels, self.input_hw.0, self.input_hw.1], rng),
            uniform(
                &[s.in_channels, s.out_channels, s.kernel.0, s.kernel.1],
                rng,
            ),
            uniform(&[s.out_channels], rng),
        ]
    }
}

pub struct MaxPoolLayer {
    pub window: usize,
    pub stride: usize,
    pub shape: [usize; 4],
}

impl Differentiable for MaxPoolLayer {
    fn name(&self) -> &str {
        "maxpool2d"
    }
    fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>, NnError> {
        Ok(maxpool2d(&x[0], self.window, self.stride)?.output)
    }
    fn backward(&self, x: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, NnError> {
        let pooled = maxpool2d(&x[0], self.window, self.stride)?;
        Ok(vec![maxpool2d_backward(x[0].shape(), &pooled.argmax, g)?])
    }
    fn sample_inputs(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        vec![distinct(&self.shape, rng)]
    }
}

pub struct ActivationLayer {
    pub kind: Activation,
    pub shape: [usize; 4],
}

impl Differentiable for ActivationLayer {
    fn name(&self) -> &str {
        match self.kind {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }
    fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>, NnError> {
        Ok(activation(&x[0], self.kind))
    }
    fn backward(&self, x: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, NnError> {
        let y = activation(&x[0], self.kind);
        Ok(vec![activation_backward(&y, g, self.kind)?])
    }
    fn sample_inputs(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        vec![away_from_zero(&self.shape, 1e-2, rng).scale(3.0)]
    }
}

pub struct AdaptivePoolLayer {
    pub bins: usize,
    pub shape: [usize; 4],
}

impl Differentiable for AdaptivePoolLayer {
    fn name(&self) -> &str {
        "adaptive_avg_pool2d"
    }
    fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>, NnError> {
        adaptive_avg_pool2d(&x[0], self.bins)
    }
    fn backward(&self, x: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, NnError> {
        Ok(vec![adaptive_avg_pool2d_backward(x[0].shape(), g)?])
    }
    fn sample_inputs(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        vec![uniform(&self.shape, rng)]
    }
}

pub struct UpsampleLayer {
    pub target: (usize, usize),
    pub shape: [usize; 4],
}

impl Differentiable for UpsampleLayer {
    fn name(&self) -> &str {
        "upsample_nearest"
    }
    fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>, NnError> {
        upsample_nearest(&x[0], self.target.0, self.target.1)
    }
    fn backward(&self, x: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, NnError> {
        Ok(vec![upsample_nearest_backward(x[0].shape(), g)?])
    }
    fn sample_inputs(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        vec![uniform(&self.shape, rng)]
    }
}

pub struct ConcatLayer {
    pub channels: Vec<usize>,
    pub hw: (usize, usize),
}

impl Differentiable for ConcatLayer {
    fn name(&self) -> &str {
        "concat"
    }
    fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>, NnError> {
        concat_channels(&x.iter().collect::<Vec<_>>())
    }
    fn backward(&self, _: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, NnError> {
        split_channels(g, &self.channels)
    }
    fn sample_inputs(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        self.channels
            .iter()
            .map(|&c| uniform(&[1, c, self.hw.0, self.hw.1], rng))
            .collect()
    }
}

/// Binary cross-entropy (pred, target) plus L2 on a third input.
pub struct BceLayer {
    pub shape: [usize; 4],
    pub l2_strength: f64,
}

impl Differentiable for BceLayer {
    fn name(&self) -> &str {
        "bce_loss"
    }
    fn forward(&self, x: &[Tensor<f64>]) -> Result<Tensor<f64>, NnError> {
        let out = bce_loss(&x[0], &x[1], self.l2_strength, &[&x[2]])?;
        Tensor::new(&[1], vec![out.loss])
    }
    fn backward(&self, x: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>, NnError> {
        let out = bce_loss(&x[0], &x[1], self.l2_strength, &[&x[2]])?;
        let s = g.data()[0];
        let n = x[0].len() as f64;
        let eps = crate::nn::loss::BCE_EPS;
        let grad_target = x[0].map(|p| {
            let p = p.clamp(eps, 1.0 - eps);
            s * ((1.0 - p).ln() - p.ln()) / n
        });
        Ok(vec![
            out.grad_pred.scale(s),
            grad_target,
            out.grad_l2[0].scale(s),
        ])
    }
    fn sample_inputs(&self, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        let pred = Tensor::from_fn(&self.shape, |_| rng.random_range(0.05..0.95));
        let target = Tensor::from_fn(
            &self.shape,
            |_| if rng.random_bool(0.5) { 1.0 } else { 0.0 },
        );
        vec![pred, target, uniform(&[6], rng)]
    }
}

/// Name -> layer lookup over every differentiable building block.
pub struct LayerCatalog {
    layers: BTreeMap<String, Arc<dyn Differentiable>>,
}

impl LayerCatalog {
    pub fn empty() -> Self {
        Self {
            layers: BTreeMap::new(),
        }
    }

    /// Every layer of the network stack at small, checkable sizes.
    pub fn standard() -> Self {
        let mut c = Self::empty();
        c.register(
            "conv2d",
            Arc::new(Conv2dLayer {
                spec: ConvSpec::same3x3(2, 3, 1, 1),
                input_hw: (7, 7),
                batch: 2,
            }),
        );
        c.register(
            "conv2d_stride2",
            Arc::new(Conv2dLayer {
                spec: ConvSpec::same3x3(2, 3, 2, 1),
                input_hw: (8, 8),
                batch: 1,
            }),
        );
        c.register(
            "conv2d_dilated",
            Arc::new(Conv2dLayer {
                spec: ConvSpec::same3x3(2, 2, 1, 4),
                input_hw: (9, 9),
                batch: 1,
            }),
        );
        c.register(
            "conv2d_dilated_stride2",
            Arc::new(Conv2dLayer {
                spec: ConvSpec::same3x3(1, 2, 2, 8),
                input_hw: (12, 12),
                batch: 1,
            }),
        );
        c.register(
            "conv2d_pointwise",
            Arc::new(Conv2dLayer {
                spec: ConvSpec::pointwise(3, 2),
                input_hw: (5, 5),
                batch: 1,
            }),
        );
        c.register(
            "transposed_conv2d",
            Arc::new(TransposedConv2dLayer {
                spec: ConvSpec {
                    in_channels: 3,
                    out_channels: 2,
                    kernel: (2, 2),
                    stride: 2,
                    dilation: 1,
                    padding: 0,
                },
                input_hw: (4, 5),
            }),
        );
        c.register(
            "transposed_conv2d_k4",
            Arc::new(TransposedConv2dLayer {
                spec: ConvSpec {
                    in_channels: 2,
                    out_channels: 2,
                    kernel: (4, 4),
                    stride: 2,
                    dilation: 1,
                    padding: 1,
                },
                input_hw: (4, 4),
            }),
        );
        c.register(
            "maxpool2d",
            Arc::new(MaxPoolLayer {
                window: 2,
                stride: 2,
                shape: [1, 2, 8, 8],
            }),
        );
        c.register(
            "relu",
            Arc::new(ActivationLayer {
                kind: Activation::Relu,
                shape: [1, 2, 5, 5],
            }),
        );
        c.register(
            "sigmoid",
            Arc::new(ActivationLayer {
                kind: Activation::Sigmoid,
                shape: [1, 2, 5, 5],
            }),
        );
        c.register(
            "adaptive_avg_pool2d",
            Arc::new(AdaptivePoolLayer {
                bins: 2,
                shape: [1, 2, 5, 5],
            }),
        );
        c.register(
            "adaptive_avg_pool2d_fine",
            Arc::new(AdaptivePoolLayer {
                bins: 5,
                shape: [1, 1, 7, 7],
            }),
        );
        c.register(
            "upsample_nearest",
            Arc::new(UpsampleLayer {
                target: (7, 7),
                shape: [1, 2, 2, 2],
            }),
        );
        c.register(
            "concat",
            Arc::new(ConcatLayer {
                channels: vec![1, 2, 3],
                hw: (3, 4),
            }),
        );
        c.register(
            "bce_loss",
            Arc::new(BceLayer {
                shape: [1, 1, 4, 4],
                l2_strength: 0.01,
            }),
        );
        c
    }

    pub fn register(&mut self, name: &str, layer: Arc<dyn Differentiable>) {
        self.layers.insert(name.to_string(), layer);
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn Differentiable>> {
        self.layers.get(name).cloned()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Arc<dyn Differentiable>)> {
        self.layers.iter().map(|(k, v)| (k.as_str(), v))
    }
}
