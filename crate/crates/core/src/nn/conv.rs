//! 2-D convolution and transposed convolution with stride, padding and
//! dilation, lowered to matrix products through im2col / col2im.

use serde::{Deserialize, Serialize};

use super::tensor::{matmul, Scalar, Tensor};
use super::NnError;

/// Geometry of a convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvSpec {
    /// 3x3 kernel with "same"-style padding (`padding == dilation`).
    pub fn same3x3(
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        dilation: usize,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: (3, 3),
            stride,
            dilation,
            padding: dilation,
        }
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: (1, 1),
            stride: 1,
            dilation: 1,
            padding: 0,
        }
    }

    pub fn effective_kernel(&self) -> (usize, usize) {
        (
            (self.kernel.0 - 1) * self.dilation + 1,
            (self.kernel.1 - 1) * self.dilation + 1,
        )
    }

    fn validate(&self) -> Result<(), NnError> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(NnError::Shape("channel counts must be >= 1".into()));
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 || self.stride == 0 || self.dilation == 0 {
            return Err(NnError::Shape(format!(
                "kernel, stride and dilation must be >= 1, got kernel {:?} stride {} dilation {}",
                self.kernel, self.stride, self.dilation
            )));
        }
        Ok(())
    }

    /// Output extent of the forward convolution over an `h x w` input.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        self.validate()?;
        let (ekh, ekw) = self.effective_kernel();
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ekh > ph {
            return Err(NnError::Shape(format!(
                "height: effective kernel {ekh} exceeds padded input {ph}"
            )));
        }
        if ekw > pw {
            return Err(NnError::Shape(format!(
                "width: effective kernel {ekw} exceeds padded input {pw}"
            )));
        }
        Ok(((ph - ekh) / self.stride + 1, (pw - ekw) / self.stride + 1))
    }

    /// Output extent of the transposed convolution over an `h x w` input.
    pub fn transposed_output_size(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        self.validate()?;
        let (ekh, ekw) = self.effective_kernel();
        let oh = ((h - 1) * self.stride + ekh).checked_sub(2 * self.padding);
        let ow = ((w - 1) * self.stride + ekw).checked_sub(2 * self.padding);
        match (oh, ow) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok((oh, ow)),
            _ => Err(NnError::Shape(format!(
                "padding {} too large for transposed output from {h}x{w}",
                self.padding
            ))),
        }
    }

    fn cols_rows(&self, channels: usize) -> usize {
        channels * self.kernel.0 * self.kernel.1
    }
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Clone, Debug)]
pub struct ConvGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

struct Geometry {
    channels: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

fn im2col<T: Scalar>(x: &[T], g: &Geometry, spec: &ConvSpec, cols: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let p = g.oh * g.ow;
    let pad = spec.padding as isize;
    for c in 0..g.channels {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                let dy = (ki * spec.dilation) as isize - pad;
                let dx = (kj * spec.dilation) as isize - pad;
                for oy in 0..g.oh {
                    let iy = (oy * spec.stride) as isize + dy;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * spec.stride) as isize + dx;
                        *v = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], g: &Geometry, spec: &ConvSpec, x: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let p = g.oh * g.ow;
    let pad = spec.padding as isize;
    for c in 0..g.channels {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                let src = &cols[row * p..(row + 1) * p];
                let dy = (ki * spec.dilation) as isize - pad;
                let dx = (kj * spec.dilation) as isize - pad;
                for oy in 0..g.oh {
                    let iy = (oy * spec.stride) as isize + dy;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, &v) in src[oy * g.ow..(oy + 1) * g.ow].iter().enumerate() {
                        let ix = (ox * spec.stride) as isize + dx;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] = dst[ix as usize] + v;
                        }
                    }
                }
            }
        }
    }
}

fn check_params<T: Scalar>(
    spec: &ConvSpec,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    transposed: bool,
) -> Result<(), NnError> {
    let (kh, kw) = spec.kernel;
    let expected = if transposed {
        [spec.in_channels, spec.out_channels, kh, kw]
    } else {
        [spec.out_channels, spec.in_channels, kh, kw]
    };
    let names = if transposed {
        [
            "in_channels",
            "out_channels",
            "kernel height",
            "kernel width",
        ]
    } else {
        [
            "out_channels",
            "in_channels",
            "kernel height",
            "kernel width",
        ]
    };
    if weights.rank() != 4 {
        return Err(NnError::Shape(format!(
            "weights must be 4-D, got {:?}",
            weights.shape()
        )));
    }
    for (i, (&got, &want)) in weights.shape().iter().zip(&expected).enumerate() {
        if got != want {
            return Err(NnError::Shape(format!(
                "weights dim {i} ({}) is {got}, expected {want}",
                names[i]
            )));
        }
    }
    if let Some(b) = bias {
        if b.shape() != [spec.out_channels] {
            return Err(NnError::Shape(format!(
                "bias shape {:?}, expected [{}] (out_channels)",
                b.shape(),
                spec.out_channels
            )));
        }
    }
    Ok(())
}

fn check_input<T: Scalar>(
    x: &Tensor<T>,
    channels: usize,
) -> Result<(usize, usize, usize), NnError> {
    let (n, c, h, w) = x.dims4()?;
    if c != channels {
        return Err(NnError::Shape(format!(
            "input channel dim is {c}, expected {channels}"
        )));
    }
    Ok((n, h, w))
}

/// Forward convolution. `weights` is (out_c, in_c, kh, kw).
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    check_params(spec, weights, Some(bias), false)?;
    let (n, h, w) = check_input(input, spec.in_channels)?;
    let (oh, ow) = spec.output_size(h, w)?;
    let g = Geometry {
        channels: spec.in_channels,
        h,
        w,
        oh,
        ow,
    };
    let k = spec.cols_rows(spec.in_channels);
    let p = oh * ow;
    let mut out = Tensor::zeros(&[n, spec.out_channels, oh, ow]);
    let mut cols = vec![T::zero(); k * p];
    for b in 0..n {
        im2col(input.item(b), &g, spec, &mut cols);
        let dst = out.item_mut(b);
        for (oc, row) in dst.chunks_mut(p).enumerate() {
            row.fill(bias.data()[oc]);
        }
        matmul(
            spec.out_channels,
            k,
            p,
            weights.data(),
            false,
            &cols,
            false,
            T::one(),
            dst,
        );
    }
    Ok(out)
}

/// Backward pass of [`conv2d`] given the gradient of the output.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>, NnError> {
    check_params(spec, weights, None, false)?;
    let (n, h, w) = check_input(input, spec.in_channels)?;
    let (oh, ow) = spec.output_size(h, w)?;
    if grad_out.shape() != [n, spec.out_channels, oh, ow] {
        return Err(NnError::Shape(format!(
            "output gradient shape {:?}, expected {:?}",
            grad_out.shape(),
            [n, spec.out_channels, oh, ow]
        )));
    }
    let g = Geometry {
        channels: spec.in_channels,
        h,
        w,
        oh,
        ow,
    };
    let k = spec.cols_rows(spec.in_channels);
    let p = oh * ow;
    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_w = Tensor::zeros(weights.shape());
    let mut grad_b = Tensor::zeros(&[spec.out_channels]);
    let mut cols = vec![T::zero(); k * p];
    for b in 0..n {
        let dy = grad_out.item(b);
        im2col(input.item(b), &g, spec, &mut cols);
        matmul(
            spec.out_channels,
            p,
            k,
            dy,
            false,
            &cols,
            true,
            T::one(),
            grad_w.data_mut(),
        );
        for (oc, row) in dy.chunks(p).enumerate() {
            let s: T = row.iter().copied().sum();
            grad_b.data_mut()[oc] = grad_b.data()[oc] + s;
        }
        matmul(
            k,
            spec.out_channels,
            p,
            weights.data(),
            true,
            dy,
            false,
            T::zero(),
            &mut cols,
        );
        col2im(&cols, &g, spec, grad_in.item_mut(b));
    }
    Ok(ConvGrads {
        input: grad_in,
        weights: grad_w,
        bias: grad_b,
    })
}

/// Transposed convolution: the adjoint of [`conv2d`] with the same
/// geometry. `weights` is (in_c, out_c, kh, kw).
pub fn transposed_conv2d<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    check_params(spec, weights, Some(bias), true)?;
    let (n, h, w) = check_input(input, spec.in_channels)?;
    let (oh, ow) = spec.transposed_output_size(h, w)?;
    // the matching forward convolution runs oh x ow -> h x w
    let g = Geometry {
        channels: spec.out_channels,
        h: oh,
        w: ow,
        oh: h,
        ow: w,
    };
    let k = spec.cols_rows(spec.out_channels);
    let p = h * w;
    let mut out = Tensor::zeros(&[n, spec.out_channels, oh, ow]);
    let mut cols = vec![T::zero(); k * p];
    for b in 0..n {
        matmul(
            k,
            spec.in_channels,
            p,
            weights.data(),
            true,
            input.item(b),
            false,
            T::zero(),
            &mut cols,
        );
        let dst = out.item_mut(b);
        col2im(&cols, &g, spec, dst);
        for (oc, plane) in dst.chunks_mut(oh * ow).enumerate() {
            let bv = bias.data()[oc];
            plane.iter_mut().for_each(|v| *v = *v + bv);
        }
    }
    Ok(out)
}

/// Backward pass of [`transposed_conv2d`].
pub fn transposed_conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>, NnError> {
    check_params(spec, weights, None, true)?;
    let (n, h, w) = check_input(input, spec.in_channels)?;
    let (oh, ow) = spec.transposed_output_size(h, w)?;
    if grad_out.shape() != [n, spec.out_channels, oh, ow] {
        return Err(NnError::Shape(format!(
            "output gradient shape {:?}, expected {:?}",
            grad_out.shape(),
            [n, spec.out_channels, oh, ow]
        )));
    }
    let g = Geometry {
        channels: spec.out_channels,
        h: oh,
        w: ow,
        oh: h,
        ow: w,
    };
    let k = spec.cols_rows(spec.out_channels);
    let p = h * w;
    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_w = Tensor::zeros(weights.shape());
    let mut grad_b = Tensor::zeros(&[spec.out_channels]);
    let mut cols = vec![T::zero(); k * p];
    for b in 0..n {
        let dy = grad_out.item(b);
        im2col(dy, &g, spec, &mut cols);
        matmul(
            spec.in_channels,
            k,
            p,
            weights.data(),
            false,
            &cols,
            false,
            T::zero(),
            grad_in.item_mut(b),
        );
        matmul(
            spec.in_channels,
            p,
            k,
            input.item(b),
            false,
            &cols,
            true,
            T::one(),
            grad_w.data_mut(),
        );
        for (oc, plane) in dy.chunks(oh * ow).enumerate() {
            let s: T = plane.iter().copied().sum();
            grad_b.data_mut()[oc] = grad_b.data()[oc] + s;
        }
    }
    Ok(ConvGrads {
        input: grad_in,
        weights: grad_w,
        bias: grad_b,
    })
}
