use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::nn::{
    activation, activation_backward, sigmoid, Activation, ConvSpec, Gradients, NamedTensors,
    Scalar, Tensor,
};
use crate::raster::GrayImage;
use crate::ynet::image_to_tensor;
use crate::ynet::model::ConvLayer;

use super::dihedral::{self, dihedral_box, dihedral_image};
use super::RpnError;

/// Channels of the proposal head: objectness logit, cell-relative centre
/// `(dx, dy)` and log extents relative to the cell size.
pub const HEAD_CHANNELS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PNetConfig {
    pub input_size: usize,
    /// Output channels of the stride-2 ladder.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub seed: u64,
    /// Propose on all eight flips and transposes of the scene and keep the
    /// union of the boxes.
    pub flip_average: bool,
}

impl Default for PNetConfig {
    fn default() -> Self {
        Self {
            input_size: 256,
            channels: vec![8, 16, 32, 64],
            kernel: 5,
            score_threshold: 0.3,
            nms_iou: 0.6,
            seed: 0,
            flip_average: true,
        }
    }
}

impl PNetConfig {
    pub fn validate(&self) -> Result<(), RpnError> {
        let stride = 1usize << self.channels.len();
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(RpnError::Config(
                "channel ladder must be non-empty and positive".into(),
            ));
        }
        if self.input_size == 0 || self.input_size % stride != 0 {
            return Err(RpnError::Config(format!(
                "input {} is not divisible by the total stride {stride}",
                self.input_size
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(RpnError::Config(format!(
                "kernel {} must be odd",
                self.kernel
            )));
        }
        if !(self.score_threshold > 0.0 && self.score_threshold < 1.0)
            || !(self.nms_iou > 0.0 && self.nms_iou < 1.0)
        {
            return Err(RpnError::Config("thresholds must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Pixels per grid cell.
    pub fn cell(&self) -> usize {
        1 << self.channels.len()
    }

    pub fn grid(&self) -> usize {
        self.input_size / self.cell()
    }
}

/// Fully-convolutional objectness network over the LR image.
#[derive(Clone, Debug)]
pub struct ProposalNet<T: Scalar = f32> {
    config: PNetConfig,
    ladder: Vec<ConvLayer>,
    head: ConvLayer,
    params: NamedTensors<T>,
}

pub struct PNetCache<T: Scalar> {
    input: Tensor<T>,
    outs: Vec<Tensor<T>>,
    pub head: Tensor<T>,
}

impl<T: Scalar> ProposalNet<T> {
    pub fn build(config: &PNetConfig) -> Result<Self, RpnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = NamedTensors::new();
        let k = config.kernel;
        let mut ladder = Vec::new();
        let mut in_c = 1;
        for (i, &c) in config.channels.iter().enumerate() {
            let spec = ConvSpec {
                in_channels: in_c,
                out_channels: c,
                kernel: (k, k),
                stride: 2,
                dilation: 1,
                padding: k / 2,
            };
            ladder.push(ConvLayer::register(
                &mut params,
                &format!("ladder.{i}"),
                spec,
                false,
                &mut rng,
            ));
            in_c = c;
        }
        let head = ConvLayer::register(
            &mut params,
            "head",
            ConvSpec::pointwise(in_c, HEAD_CHANNELS),
            false,
            &mut rng,
        );
        Ok(Self {
            config: config.clone(),
            ladder,
            head,
            params,
        })
    }

    pub fn config(&self) -> &PNetConfig {
        &self.config
    }

    pub fn set_thresholds(&mut self, score: f64, nms_iou: f64) {
        self.config.score_threshold = score;
        self.config.nms_iou = nms_iou;
    }

    pub fn params(&self) -> &NamedTensors<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut NamedTensors<T> {
        &mut self.params
    }

    pub fn set_params(&mut self, params: NamedTensors<T>) -> Result<(), RpnError> {
        self.params.check_matches(&params)?;
        self.params = params;
        Ok(())
    }

    /// Sets the objectness bias of the head.
    pub fn set_objectness_bias(&mut self, value: f64) {
        self.params.tensor_mut(self.head.bias).data_mut()[0] = T::from_f64(value);
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<PNetCache<T>, RpnError> {
        let (_, c, h, w) = x.dims4()?;
        let s = self.config.input_size;
        if c != 1 || h != s || w != s {
            return Err(RpnError::InputSize {
                expected: s,
                got: (c, h, w),
            });
        }
        let mut outs: Vec<Tensor<T>> = Vec::with_capacity(self.ladder.len());
        for (i, layer) in self.ladder.iter().enumerate() {
            let input = if i == 0 { x } else { &outs[i - 1] };
            let y = layer.forward(&self.params, input)?;
            outs.push(activation(&y, Activation::Relu));
        }
        let head = self
            .head
            .forward(&self.params, outs.last().expect("non-empty ladder"))?;
        Ok(PNetCache {
            input: x.clone(),
            outs,
            head,
        })
    }

    /// Raw head output, shape `(N, 5, grid, grid)`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, RpnError> {
        Ok(self.forward_cached(x)?.head)
    }

    pub fn backward(
        &self,
        cache: &PNetCache<T>,
        grad_head: &Tensor<T>,
    ) -> Result<Gradients<T>, RpnError> {
        let mut grads = self.params.zeros_like();
        let last = cache.outs.last().expect("non-empty ladder");
        let mut g = self
            .head
            .backward(&self.params, last, grad_head, &mut grads)?;
        for i in (0..self.ladder.len()).rev() {
            let g_pre = activation_backward(&cache.outs[i], &g, Activation::Relu)?;
            let input = if i == 0 {
                &cache.input
            } else {
                &cache.outs[i - 1]
            };
            g = self.ladder[i].backward(&self.params, input, &g_pre, &mut grads)?;
        }
        Ok(grads)
    }
}

/// Decodes one image's head output (`5 x grid x grid`, flat) into LR boxes
/// for every cell whose objectness exceeds `threshold`.
pub fn decode_head(head: &[f32], grid: usize, cell: usize, threshold: f64) -> Vec<BBox> {
    let plane = grid * grid;
    let extent = (grid * cell) as f64;
    let c = cell as f64;
    let mut out = Vec::new();
    for gy in 0..grid {
        for gx in 0..grid {
            let i = gy * grid + gx;
            let score = sigmoid(head[i] as f64);
            if score <= threshold {
                continue;
            }
            let reach = grid as f64;
            let dx = (head[plane + i] as f64).clamp(-reach, reach + 1.0);
            let dy = (head[2 * plane + i] as f64).clamp(-reach, reach + 1.0);
            let w = c * (head[3 * plane + i] as f64).clamp(-4.0, 5.0).exp();
            let h = c * (head[4 * plane + i] as f64).clamp(-4.0, 5.0).exp();
            let (cx, cy) = ((gx as f64 + dx) * c, (gy as f64 + dy) * c);
            if let Some(b) = BBox::new(cx - w / 2.0, cy - h / 2.0, w, h).clamp_to(extent, extent) {
                out.push(b.with_score(score));
            }
        }
    }
    out
}

impl ProposalNet<f32> {
    /// Scored LR boxes for every confident cell (before NMS).
    pub fn propose(&self, lr: &GrayImage) -> Result<Vec<BBox>, RpnError> {
        if !self.config.flip_average {
            return self.propose_once(lr);
        }
        let extent = lr.width() as f64;
        let mut boxes = Vec::new();
        for d in 0..dihedral::SYMMETRIES {
            let back = dihedral::inverse(d);
            let found = self.propose_once(&dihedral_image(lr, d))?;
            boxes.extend(found.iter().map(|b| dihedral_box(b, extent, back)));
        }
        Ok(boxes)
    }

    fn propose_once(&self, lr: &GrayImage) -> Result<Vec<BBox>, RpnError> {
        let head = self.forward(&image_to_tensor(lr))?;
        Ok(decode_head(
            head.data(),
            self.config.grid(),
            self.config.cell(),
            self.config.score_threshold,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_shape_is_five_by_sixteen() {
        let net = ProposalNet::<f32>::build(&PNetConfig::default()).unwrap();
        let head = net.forward(&Tensor::zeros(&[1, 1, 256, 256])).unwrap();
        assert_eq!(head.shape(), &[1, 5, 16, 16]);
    }

    #[test]
    fn strongly_negative_bias_proposes_nothing() {
        let mut net = ProposalNet::<f32>::build(&PNetConfig::default()).unwrap();
        let head = net.params().index_of("head.weight").unwrap();
        net.params_mut().tensor_mut(head).data_mut().fill(0.0);
        net.set_objectness_bias(-10.0);
        let lr = GrayImage::from_fn(256, 256, |x, y| ((x * 31 + y * 17) % 256) as u8);
        assert!(net.propose(&lr).unwrap().is_empty());
    }

    #[test]
    fn decode_places_box_in_cell() {
        let grid = 2;
        let mut head = vec![0.0f32; 5 * 4];
        head[3] = 5.0; // cell (1, 1)
        head[4 + 3] = 0.5;
        head[8 + 3] = 0.5;
        let boxes = decode_head(&head, grid, 16, 0.5);
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0].center(), (24.0, 24.0));
        assert_eq!((boxes[0].w, boxes[0].h), (16.0, 16.0));
    }

    #[test]
    fn flip_averaged_proposals_follow_the_scene() {
        let mut config = PNetConfig::default();
        config.score_threshold = 1e-6;
        let net = ProposalNet::<f32>::build(&config).unwrap();
        let lr = GrayImage::from_fn(256, 256, |x, y| ((x * x + 3 * y) % 251) as u8);
        let key = |b: &BBox| {
            let r = |v: f64| (v * 64.0).round() as i64;
            (r(b.x), r(b.y), r(b.w), r(b.h))
        };
        let mut base: Vec<_> = net.propose(&lr).unwrap().iter().map(key).collect();
        base.sort();
        assert!(base.len() > 256);
        for d in [3, 5] {
            let mut moved: Vec<_> = net
                .propose(&dihedral_image(&lr, d))
                .unwrap()
                .iter()
                .map(|b| key(&dihedral_box(b, 256.0, dihedral::inverse(d))))
                .collect();
            moved.sort();
            assert_eq!(moved, base, "d = {d}");
        }
    }
}
