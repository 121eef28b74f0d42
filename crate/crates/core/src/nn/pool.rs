//! Max pooling, adaptive average pooling, nearest-neighbour upsampling and
//! channel concatenation.

use super::tensor::{Scalar, Tensor};
use super::NnError;

/// Result of [`maxpool2d`]: the pooled tensor plus, for every output cell,
/// the flat input index it was taken from.
#[derive(Clone, Debug)]
pub struct MaxPoolOutput<T: Scalar> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

pub fn maxpool2d<T: Scalar>(
    input: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<MaxPoolOutput<T>, NnError> {
    let (n, c, h, w) = input.dims4()?;
    if window == 0 || stride == 0 {
        return Err(NnError::Shape("pool window and stride must be >= 1".into()));
    }
    if window > h || window > w {
        return Err(NnError::Shape(format!(
            "pool window {window} larger than input {h}x{w}"
        )));
    }
    let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0usize; n * c * oh * ow];
    let src = input.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                // strict comparison keeps the first maximum in row-major order
                for ky in 0..window {
                    for kx in 0..window {
                        let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                }
                let o = (plane * oh + oy) * ow + ox;
                out.data_mut()[o] = src[best];
                argmax[o] = best;
            }
        }
    }
    Ok(MaxPoolOutput {
        output: out,
        argmax,
    })
}

/// Routes each output gradient to the input position recorded in `argmax`.
pub fn maxpool2d_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    if argmax.len() != grad_out.len() {
        return Err(NnError::Shape(format!(
            "argmax has {} entries but the output gradient has {}",
            argmax.len(),
            grad_out.len()
        )));
    }
    let mut grad = Tensor::zeros(input_shape);
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        grad.data_mut()[idx] = grad.data()[idx] + g;
    }
    Ok(grad)
}

fn bin_bounds(i: usize, input: usize, output: usize) -> (usize, usize) {
    let start = i * input / output;
    let end = ((i + 1) * input).div_ceil(output);
    (start, end)
}

/// Average pooling onto a fixed `bins x bins` grid; bin `i` spans
/// `[floor(i*H/bins), ceil((i+1)*H/bins))`.
pub fn adaptive_avg_pool2d<T: Scalar>(
    input: &Tensor<T>,
    bins: usize,
) -> Result<Tensor<T>, NnError> {
    let (n, c, h, w) = input.dims4()?;
    if bins == 0 {
        return Err(NnError::Shape(
            "adaptive pool needs at least one bin".into(),
        ));
    }
    let mut out = Tensor::zeros(&[n, c, bins, bins]);
    let src = input.data();
    for plane in 0..n * c {
        for by in 0..bins {
            let (y0, y1) = bin_bounds(by, h, bins);
            for bx in 0..bins {
                let (x0, x1) = bin_bounds(bx, w, bins);
                let mut acc = T::zero();
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc = acc + src[plane * h * w + y * w + x];
                    }
                }
                let count = T::from_f64(((y1 - y0) * (x1 - x0)) as f64);
                out.data_mut()[(plane * bins + by) * bins + bx] = acc / count;
            }
        }
    }
    Ok(out)
}

pub fn adaptive_avg_pool2d_backward<T: Scalar>(
    input_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    let (n, c, bins, bins_w) = grad_out.dims4()?;
    if bins != bins_w || input_shape.len() != 4 || input_shape[0] != n || input_shape[1] != c {
        return Err(NnError::Shape(format!(
            "adaptive pool gradient {:?} does not fit input {input_shape:?}",
            grad_out.shape()
        )));
    }
    let (h, w) = (input_shape[2], input_shape[3]);
    let mut grad = Tensor::zeros(input_shape);
    for plane in 0..n * c {
        for by in 0..bins {
            let (y0, y1) = bin_bounds(by, h, bins);
            for bx in 0..bins {
                let (x0, x1) = bin_bounds(bx, w, bins);
                let count = T::from_f64(((y1 - y0) * (x1 - x0)) as f64);
                let g = grad_out.data()[(plane * bins + by) * bins + bx] / count;
                for y in y0..y1 {
                    for x in x0..x1 {
                        let i = plane * h * w + y * w + x;
                        grad.data_mut()[i] = grad.data()[i] + g;
                    }
                }
            }
        }
    }
    Ok(grad)
}

/// Nearest-neighbour resize to `out_h x out_w`; output pixel `(y, x)`
/// copies source pixel `(floor(y*h/out_h), floor(x*w/out_w))`.
pub fn upsample_nearest<T: Scalar>(
    input: &Tensor<T>,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<T>, NnError> {
    let (n, c, h, w) = input.dims4()?;
    if out_h == 0 || out_w == 0 {
        return Err(NnError::Shape("upsample target must be non-empty".into()));
    }
    let mut out = Tensor::zeros(&[n, c, out_h, out_w]);
    for plane in 0..n * c {
        for y in 0..out_h {
            let sy = y * h / out_h;
            for x in 0..out_w {
                let sx = x * w / out_w;
                out.data_mut()[(plane * out_h + y) * out_w + x] =
                    input.data()[plane * h * w + sy * w + sx];
            }
        }
    }
    Ok(out)
}

pub fn upsample_nearest_backward<T: Scalar>(
    input_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    let (n, c, out_h, out_w) = grad_out.dims4()?;
    if input_shape.len() != 4 || input_shape[0] != n || input_shape[1] != c {
        return Err(NnError::Shape(format!(
            "upsample gradient {:?} does not fit input {input_shape:?}",
            grad_out.shape()
        )));
    }
    let (h, w) = (input_shape[2], input_shape[3]);
    let mut grad = Tensor::zeros(input_shape);
    for plane in 0..n * c {
        for y in 0..out_h {
            let sy = y * h / out_h;
            for x in 0..out_w {
                let sx = x * w / out_w;
                let i = plane * h * w + sy * w + sx;
                grad.data_mut()[i] =
                    grad.data()[i] + grad_out.data()[(plane * out_h + y) * out_w + x];
            }
        }
    }
    Ok(grad)
}

/// Concatenates 4-D tensors along the channel axis.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>, NnError> {
    let first = parts
        .first()
        .ok_or_else(|| NnError::Shape("nothing to concatenate".into()))?;
    let (n, _, h, w) = first.dims4()?;
    let mut channels = 0;
    for p in parts {
        let (pn, pc, ph, pw) = p.dims4()?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(NnError::Shape(format!(
                "concat: {:?} does not match batch/height/width of {:?}",
                p.shape(),
                first.shape()
            )));
        }
        channels += pc;
    }
    let mut out = Tensor::zeros(&[n, channels, h, w]);
    for b in 0..n {
        let mut offset = 0;
        let dst = out.item_mut(b);
        for p in parts {
            let src = p.item(b);
            dst[offset..offset + src.len()].copy_from_slice(src);
            offset += src.len();
        }
    }
    Ok(out)
}

/// Splits a channel-concatenated gradient back into per-part gradients.
pub fn split_channels<T: Scalar>(
    grad: &Tensor<T>,
    channels: &[usize],
) -> Result<Vec<Tensor<T>>, NnError> {
    let (n, c, h, w) = grad.dims4()?;
    if channels.iter().sum::<usize>() != c {
        return Err(NnError::Shape(format!(
            "split sizes {channels:?} do not sum to {c}"
        )));
    }
    let mut parts: Vec<Tensor<T>> = channels
        .iter()
        .map(|&pc| Tensor::zeros(&[n, pc, h, w]))
        .collect();
    for b in 0..n {
        let src = grad.item(b);
        let mut offset = 0;
        for part in parts.iter_mut() {
            let dst = part.item_mut(b);
            dst.copy_from_slice(&src[offset..offset + dst.len()]);
            offset += dst.len();
        }
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_by_two_window() {
        let x = Tensor::new(&[1, 1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let y = maxpool2d(&x, 2, 2).unwrap();
        assert_eq!(y.output.data(), &[4.0]);
        assert_eq!(y.argmax, vec![3]);
    }

    #[test]
    fn constant_input_gives_constant_output() {
        let x = Tensor::full(&[1, 2, 6, 6], 0.25f32);
        let y = maxpool2d(&x, 2, 2).unwrap();
        assert!(y.output.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn ties_route_to_first_occurrence() {
        let x = Tensor::full(&[1, 1, 2, 2], 1.0f64);
        let y = maxpool2d(&x, 2, 2).unwrap();
        let g =
            maxpool2d_backward(x.shape(), &y.argmax, &Tensor::full(&[1, 1, 1, 1], 1.0)).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = Tensor::<f64>::from_fn(&[1, 1, 8, 8], |_| rng.random_range(-5.0..5.0));
        let y = maxpool2d(&x, 2, 2).unwrap();
        for oy in 0..4 {
            for ox in 0..4 {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        m = m.max(x.data()[(2 * oy + dy) * 8 + 2 * ox + dx]);
                    }
                }
                assert_eq!(y.output.data()[oy * 4 + ox], m);
            }
        }
    }

    #[test]
    fn window_larger_than_input_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 1, 3, 3]);
        assert!(maxpool2d(&x, 4, 1).is_err());
    }

    #[test]
    fn adaptive_pool_single_bin_is_mean() {
        let x = Tensor::<f64>::from_fn(&[1, 1, 5, 5], |i| i as f64);
        let y = adaptive_avg_pool2d(&x, 1).unwrap();
        assert!((y.data()[0] - 12.0).abs() < 1e-12);
        let y = adaptive_avg_pool2d(&x, 5).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn nearest_upsample_replicates() {
        let x = Tensor::new(&[1, 1, 1, 2], vec![1.0f32, 2.0]).unwrap();
        let y = upsample_nearest(&x, 2, 4).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn concat_then_split_restores_parts() {
        let a = Tensor::<f32>::from_fn(&[2, 1, 2, 2], |i| i as f32);
        let b = Tensor::<f32>::from_fn(&[2, 3, 2, 2], |i| -(i as f32));
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 4, 2, 2]);
        let parts = split_channels(&c, &[1, 3]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
