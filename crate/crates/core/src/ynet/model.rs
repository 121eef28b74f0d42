//! Y-Net assembly: a regular convolution branch and a dilated-convolution
//! plus pyramid-pooling branch, fused by addition at the bottleneck and
//! decoded back to input resolution with transposed convolutions and
//! encoder skips.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::init::he_uniform;
use crate::nn::{
    activation, activation_backward, adaptive_avg_pool2d, adaptive_avg_pool2d_backward,
    concat_channels, conv2d, conv2d_backward, maxpool2d, maxpool2d_backward, sigmoid,
    split_channels, transposed_conv2d, transposed_conv2d_backward, upsample_nearest,
    upsample_nearest_backward, Activation, ConvSpec, Gradients, NamedTensors, NnError, Scalar,
    Tensor,
};
use crate::raster::{GrayImage, ProbMap};

use super::config::YNetConfig;
use super::YNetError;

/// A convolution whose weight and bias live at the given parameter slots.
#[derive(Clone, Debug)]
pub(crate) struct ConvLayer {
    pub spec: ConvSpec,
    pub weight: usize,
    pub bias: usize,
    pub transposed: bool,
}

impl ConvLayer {
    pub(crate) fn register<T: Scalar>(
        params: &mut NamedTensors<T>,
        name: &str,
        spec: ConvSpec,
        transposed: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let (kh, kw) = spec.kernel;
        let (shape, fan_in) = if transposed {
            (
                [spec.in_channels, spec.out_channels, kh, kw],
                spec.in_channels * kh * kw,
            )
        } else {
            (
                [spec.out_channels, spec.in_channels, kh, kw],
                spec.in_channels * kh * kw,
            )
        };
        let weight = params.push(format!("{name}.weight"), he_uniform(&shape, fan_in, rng));
        let bias = params.push(format!("{name}.bias"), Tensor::zeros(&[spec.out_channels]));
        Self {
            spec,
            weight,
            bias,
            transposed,
        }
    }

    pub(crate) fn forward<T: Scalar>(
        &self,
        p: &NamedTensors<T>,
        x: &Tensor<T>,
    ) -> Result<Tensor<T>, NnError> {
        let (w, b) = (p.tensor(self.weight), p.tensor(self.bias));
        Ok(if self.transposed {
            transposed_conv2d(x, &self.spec, w, b)?
        } else {
            conv2d(x, &self.spec, w, b)?
        })
    }

    /// Accumulates parameter gradients into `grads` and returns the input
    /// gradient.
    pub(crate) fn backward<T: Scalar>(
        &self,
        p: &NamedTensors<T>,
        x: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>, NnError> {
        let w = p.tensor(self.weight);
        let g = if self.transposed {
            transposed_conv2d_backward(x, &self.spec, w, grad_out)?
        } else {
            conv2d_backward(x, &self.spec, w, grad_out)?
        };
        grads.tensor_mut(self.weight).add_assign(&g.weights)?;
        grads.tensor_mut(self.bias).add_assign(&g.bias)?;
        Ok(g.input)
    }
}

/// Layer table derived from a [`YNetConfig`].
#[derive(Clone, Debug)]
pub(crate) struct Architecture {
    regular: Vec<ConvLayer>,
    dilated: Vec<ConvLayer>,
    pyramid: Vec<ConvLayer>,
    project: ConvLayer,
    upsample: Vec<ConvLayer>,
    decode: Vec<ConvLayer>,
    head: ConvLayer,
}

/// Y-Net parameters together with the configuration that shaped them.
#[derive(Clone, Debug)]
pub struct YNetModel<T: Scalar = f32> {
    config: YNetConfig,
    arch: Architecture,
    params: NamedTensors<T>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache<T: Scalar> {
    input: Tensor<T>,
    reg_out: Vec<Tensor<T>>,
    reg_pool: Vec<Tensor<T>>,
    reg_argmax: Vec<Vec<usize>>,
    dil_out: Vec<Tensor<T>>,
    pyr_pooled: Vec<Tensor<T>>,
    pyr_out: Vec<Tensor<T>>,
    right_cat: Tensor<T>,
    projected: Tensor<T>,
    fused: Tensor<T>,
    up_out: Vec<Tensor<T>>,
    dec_cat: Vec<Tensor<T>>,
    dec_out: Vec<Tensor<T>>,
    pub logits: Tensor<T>,
    pub prob: Tensor<T>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Shapes of the left branch after each conv + pool stage.
    pub fn regular_ladder(&self) -> Vec<Vec<usize>> {
        self.reg_pool.iter().map(|t| t.shape().to_vec()).collect()
    }

    /// Hash of every ReLU on/off state and max-pool winner.
    pub fn regime(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        let relus = self
            .reg_out
            .iter()
            .chain(&self.dil_out)
            .chain(&self.pyr_out)
            .chain(std::iter::once(&self.projected))
            .chain(&self.up_out)
            .chain(&self.dec_out);
        for t in relus {
            for v in t.data() {
                (*v > T::zero()).hash(&mut h);
            }
        }
        self.reg_argmax.hash(&mut h);
        h.finish()
    }
}

/// Shapes of the two tensors added at the fusion node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FusionShapes {
    pub regular: Vec<usize>,
    pub dilated: Vec<usize>,
}

fn relu<T: Scalar>(x: Tensor<T>) -> Tensor<T> {
    activation(&x, Activation::Relu)
}

fn relu_back<T: Scalar>(out: &Tensor<T>, g: &Tensor<T>) -> Result<Tensor<T>, YNetError> {
    Ok(activation_backward(out, g, Activation::Relu)?)
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<(), YNetError> {
    match slot {
        Some(acc) => acc.add_assign(&g)?,
        None => *slot = Some(g),
    }
    Ok(())
}

/// Builds a freshly initialised model; weights are He-uniform from
/// `config.seed`, biases zero.
pub fn build_ynet(config: &YNetConfig) -> Result<YNetModel<f32>, YNetError> {
    YNetModel::build(config)
}

impl<T: Scalar> YNetModel<T> {
    pub fn build(config: &YNetConfig) -> Result<Self, YNetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut p = NamedTensors::new();
        let ladder = config.regular_ladder();

        let mut regular = Vec::new();
        let mut prev = 1;
        for (k, &c) in ladder.iter().enumerate() {
            regular.push(ConvLayer::register(
                &mut p,
                &format!("regular.{k}"),
                ConvSpec::same3x3(prev, c, 1, 1),
                false,
                &mut rng,
            ));
            prev = c;
        }

        let dc = config.scaled(config.dilated_channels);
        let mut dilated = Vec::new();
        let mut prev = 1;
        for (i, &d) in config.dilation_schedule.iter().enumerate() {
            let stride = if i < 4 { 2 } else { 1 };
            dilated.push(ConvLayer::register(
                &mut p,
                &format!("dilated.{i}"),
                ConvSpec::same3x3(prev, dc, stride, d),
                false,
                &mut rng,
            ));
            prev = dc;
        }

        let pc = (dc / 4).max(1);
        let pyramid = config
            .pyramid_bin_sizes
            .iter()
            .enumerate()
            .map(|(j, _)| {
                ConvLayer::register(
                    &mut p,
                    &format!("pyramid.{j}"),
                    ConvSpec::pointwise(dc, pc),
                    false,
                    &mut rng,
                )
            })
            .collect::<Vec<_>>();
        let right_channels = dc + pc * pyramid.len();
        let project = ConvLayer::register(
            &mut p,
            "project",
            ConvSpec::pointwise(right_channels, ladder[3]),
            false,
            &mut rng,
        );

        // decoder: bottleneck -> S/8 -> S/4 -> S/2 -> S
        let up_channels = [ladder[2], ladder[1], ladder[0], (ladder[0] / 2).max(1)];
        let skip_channels = [ladder[2], ladder[1], ladder[0], ladder[0]];
        let mut upsample = Vec::new();
        let mut decode = Vec::new();
        let mut prev = ladder[3];
        for i in 0..4 {
            let up = ConvSpec {
                in_channels: prev,
                out_channels: up_channels[i],
                kernel: (2, 2),
                stride: 2,
                dilation: 1,
                padding: 0,
            };
            upsample.push(ConvLayer::register(
                &mut p,
                &format!("up.{i}"),
                up,
                true,
                &mut rng,
            ));
            let cat = up_channels[i] + skip_channels[i];
            decode.push(ConvLayer::register(
                &mut p,
                &format!("decode.{i}"),
                ConvSpec::same3x3(cat, up_channels[i], 1, 1),
                false,
                &mut rng,
            ));
            prev = up_channels[i];
        }
        let head = ConvLayer::register(
            &mut p,
            "head",
            ConvSpec::pointwise(prev, 1),
            false,
            &mut rng,
        );

        Ok(Self {
            config: config.clone(),
            arch: Architecture {
                regular,
                dilated,
                pyramid,
                project,
                upsample,
                decode,
                head,
            },
            params: p,
        })
    }

    pub fn config(&self) -> &YNetConfig {
        &self.config
    }

    pub fn params(&self) -> &NamedTensors<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut NamedTensors<T> {
        &mut self.params
    }

    /// Replaces all parameters after checking names and shapes.
    pub fn set_params(&mut self, params: NamedTensors<T>) -> Result<(), YNetError> {
        self.params.check_matches(&params)?;
        self.params = params;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> YNetModel<U> {
        YNetModel {
            config: self.config.clone(),
            arch: self.arch.clone(),
            params: self.params.cast(),
        }
    }

    /// Parameter names that carry an L2 penalty (all convolution weights).
    pub fn is_penalised(name: &str) -> bool {
        name.ends_with(".weight")
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), YNetError> {
        let (_, c, h, w) = x.dims4()?;
        let s = self.config.input_size;
        if c != 1 || h != s || w != s {
            return Err(YNetError::InputSize {
                expected: s,
                got: (c, h, w),
            });
        }
        Ok(())
    }

    /// Probability map (N, 1, S, S) for a batch of (N, 1, S, S) inputs.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, YNetError> {
        Ok(self.forward_cached(x)?.prob)
    }

    pub fn fusion_shapes(&self, x: &Tensor<T>) -> Result<FusionShapes, YNetError> {
        let cache = self.forward_cached(x)?;
        Ok(FusionShapes {
            regular: cache.reg_pool[3].shape().to_vec(),
            dilated: cache.projected.shape().to_vec(),
        })
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<ForwardCache<T>, YNetError> {
        self.check_input(x)?;
        let a = &self.arch;
        let p = &self.params;

        let mut reg_out = Vec::with_capacity(4);
        let mut reg_pool: Vec<Tensor<T>> = Vec::with_capacity(4);
        let mut reg_argmax = Vec::with_capacity(4);
        for (k, layer) in a.regular.iter().enumerate() {
            let input = if k == 0 { x } else { &reg_pool[k - 1] };
            let out = relu(layer.forward(p, input)?);
            let pooled = maxpool2d(&out, 2, 2)?;
            reg_out.push(out);
            reg_pool.push(pooled.output);
            reg_argmax.push(pooled.argmax);
        }

        let mut dil_out: Vec<Tensor<T>> = Vec::with_capacity(a.dilated.len());
        for (i, layer) in a.dilated.iter().enumerate() {
            let input = if i == 0 { x } else { &dil_out[i - 1] };
            dil_out.push(relu(layer.forward(p, input)?));
        }
        let deepest = dil_out.last().expect("at least four dilated layers");
        let (_, _, bh, bw) = deepest.dims4()?;

        let mut pyr_pooled = Vec::new();
        let mut pyr_out = Vec::new();
        let mut pyr_up = Vec::new();
        for (layer, &bins) in a.pyramid.iter().zip(&self.config.pyramid_bin_sizes) {
            let pooled = adaptive_avg_pool2d(deepest, bins)?;
            let out = relu(layer.forward(p, &pooled)?);
            pyr_up.push(upsample_nearest(&out, bh, bw)?);
            pyr_pooled.push(pooled);
            pyr_out.push(out);
        }
        let mut parts = vec![deepest];
        parts.extend(pyr_up.iter());
        let right_cat = concat_channels(&parts)?;
        let projected = relu(a.project.forward(p, &right_cat)?);
        let fused = reg_pool[3].add(&projected)?;

        let skips = [&reg_pool[2], &reg_pool[1], &reg_pool[0], &reg_out[0]];
        let mut up_out = Vec::with_capacity(4);
        let mut dec_cat = Vec::with_capacity(4);
        let mut dec_out: Vec<Tensor<T>> = Vec::with_capacity(4);
        for i in 0..4 {
            let input = if i == 0 { &fused } else { &dec_out[i - 1] };
            let up = relu(a.upsample[i].forward(p, input)?);
            let cat = concat_channels(&[&up, skips[i]])?;
            let out = relu(a.decode[i].forward(p, &cat)?);
            up_out.push(up);
            dec_cat.push(cat);
            dec_out.push(out);
        }
        let logits = a.head.forward(p, &dec_out[3])?;
        let prob = logits.map(sigmoid);

        Ok(ForwardCache {
            input: x.clone(),
            reg_out,
            reg_pool,
            reg_argmax,
            dil_out,
            pyr_pooled,
            pyr_out,
            right_cat,
            projected,
            fused,
            up_out,
            dec_cat,
            dec_out,
            logits,
            prob,
        })
    }

    /// Parameter gradients (and the input gradient) given d loss / d logits.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_logits: &Tensor<T>,
    ) -> Result<(Gradients<T>, Tensor<T>), YNetError> {
        let a = &self.arch;
        let p = &self.params;
        let mut grads = p.zeros_like();

        let mut g = a
            .head
            .backward(p, &cache.dec_out[3], grad_logits, &mut grads)?;

        let mut skip_grads: [Option<Tensor<T>>; 4] = [None, None, None, None];
        let skip_channels: Vec<usize> = cache
            .dec_cat
            .iter()
            .zip(&cache.up_out)
            .map(|(c, u)| c.shape()[1] - u.shape()[1])
            .collect();
        for i in (0..4).rev() {
            let g_dec = relu_back(&cache.dec_out[i], &g)?;
            let g_cat = a.decode[i].backward(p, &cache.dec_cat[i], &g_dec, &mut grads)?;
            let mut parts =
                split_channels(&g_cat, &[cache.up_out[i].shape()[1], skip_channels[i]])?;
            let g_skip = parts.pop().expect("two parts");
            let g_up = parts.pop().expect("two parts");
            skip_grads[i] = Some(g_skip);
            let g_up = relu_back(&cache.up_out[i], &g_up)?;
            let input = if i == 0 {
                &cache.fused
            } else {
                &cache.dec_out[i - 1]
            };
            g = a.upsample[i].backward(p, input, &g_up, &mut grads)?;
        }
        let g_fused = g;

        // right branch
        let g_proj = relu_back(&cache.projected, &g_fused)?;
        let g_right = a
            .project
            .backward(p, &cache.right_cat, &g_proj, &mut grads)?;
        let deepest = cache.dil_out.last().expect("dilated layers");
        let mut split = vec![deepest.shape()[1]];
        split.extend(cache.pyr_out.iter().map(|t| t.shape()[1]));
        let mut right_parts = split_channels(&g_right, &split)?.into_iter();
        let mut g_deep = right_parts.next().expect("deepest part");
        for (j, g_up) in right_parts.enumerate() {
            let g_out = upsample_nearest_backward(cache.pyr_out[j].shape(), &g_up)?;
            let g_out = relu_back(&cache.pyr_out[j], &g_out)?;
            let g_pooled = a.pyramid[j].backward(p, &cache.pyr_pooled[j], &g_out, &mut grads)?;
            g_deep.add_assign(&adaptive_avg_pool2d_backward(deepest.shape(), &g_pooled)?)?;
        }
        let mut g = g_deep;
        let mut g_input: Option<Tensor<T>> = None;
        for i in (0..a.dilated.len()).rev() {
            let g_pre = relu_back(&cache.dil_out[i], &g)?;
            let input = if i == 0 {
                &cache.input
            } else {
                &cache.dil_out[i - 1]
            };
            g = a.dilated[i].backward(p, input, &g_pre, &mut grads)?;
        }
        accumulate(&mut g_input, g)?;

        // regular branch: pooled outputs receive the fusion gradient (stage 3)
        // and decoder skips (stages 0..2); stage-0 conv output gets the last skip
        let [s0, s1, s2, s3] = skip_grads;
        let mut pool_grads: [Option<Tensor<T>>; 4] = [s2, s1, s0, Some(g_fused)];
        let mut out0_skip = s3;
        for k in (0..4).rev() {
            let gp = pool_grads[k]
                .take()
                .expect("every pooled output feeds a consumer");
            let mut g_out =
                maxpool2d_backward(cache.reg_out[k].shape(), &cache.reg_argmax[k], &gp)?;
            if k == 0 {
                if let Some(s) = out0_skip.take() {
                    g_out.add_assign(&s)?;
                }
            }
            let g_pre = relu_back(&cache.reg_out[k], &g_out)?;
            let input = if k == 0 {
                &cache.input
            } else {
                &cache.reg_pool[k - 1]
            };
            let g_in = a.regular[k].backward(p, input, &g_pre, &mut grads)?;
            if k == 0 {
                accumulate(&mut g_input, g_in)?;
            } else {
                accumulate(&mut pool_grads[k - 1], g_in)?;
            }
        }
        Ok((grads, g_input.expect("input gradient")))
    }
}

impl YNetModel<f32> {
    /// Segments one crop; output values lie in (0, 1).
    pub fn forward_image(&self, crop: &GrayImage) -> Result<ProbMap, YNetError> {
        let s = self.config.input_size;
        if crop.width() != s || crop.height() != s {
            return Err(YNetError::InputSize {
                expected: s,
                got: (1, crop.height(), crop.width()),
            });
        }
        let x = image_to_tensor(crop);
        let prob = self.forward(&x)?;
        Ok(ProbMap::from_vec(s, s, prob.into_data()).expect("output extent equals input extent"))
    }
}

/// Scales 8-bit pixels into [0, 1] as a (1, 1, H, W) tensor.
pub fn image_to_tensor(img: &GrayImage) -> Tensor<f32> {
    Tensor::new(
        &[1, 1, img.height(), img.width()],
        img.data().iter().map(|&v| v as f32 / 255.0).collect(),
    )
    .expect("non-empty image")
}

/// [`ynet_forward`] over an 8-bit crop.
pub fn ynet_forward(model: &YNetModel<f32>, crop: &GrayImage) -> Result<ProbMap, YNetError> {
    model.forward_image(crop)
}
