use crate::error::{invalid, shape_err, Result};
use crate::scalar::Real;

use super::Tensor;

/// A 2-D convolution layer: weights `out × in × k × k` plus one bias per output channel.
///
/// The operation is cross-correlation; kernels are not flipped.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2DSpec<T> {
    in_channels: usize,
    out_channels: usize,
    kernel_size: usize,
    stride: usize,
    padding: usize,
    weight: Tensor<T>,
    bias: Tensor<T>,
}

impl<T: Real> Conv2DSpec<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>, stride: usize, padding: usize) -> Result<Self> {
        let (out_channels, in_channels, kernel_size) = match weight.shape()[..] {
            [o, i, kh, kw] if kh == kw => (o, i, kh),
            _ => {
                return Err(shape_err!(
                    "conv weight must be out×in×k×k, got {:?}",
                    weight.shape()
                ))
            }
        };
        if bias.shape() != [out_channels] {
            return Err(shape_err!(
                "conv bias must have shape [{}], got {:?}",
                out_channels,
                bias.shape()
            ));
        }
        if stride == 0 {
            return Err(invalid!("conv stride must be positive"));
        }
        Ok(Conv2DSpec {
            in_channels,
            out_channels,
            kernel_size,
            stride,
            padding,
            weight,
            bias,
        })
    }

    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self::new(
            Tensor::zeros(&[out_channels, in_channels, kernel_size, kernel_size]),
            Tensor::zeros(&[out_channels]),
            stride,
            padding,
        )
        .expect("consistent conv dims")
    }

    /// Stride 1 with `k / 2` padding, which keeps spatial size for odd `k`.
    pub fn same(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        Self::zeros(in_channels, out_channels, kernel_size, 1, kernel_size / 2)
    }

    /// Same geometry, new parameter values.
    pub fn with_params(&self, weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        self.weight.expect_same_shape(&weight)?;
        self.bias.expect_same_shape(&bias)?;
        Self::new(weight, bias, self.stride, self.padding)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }
    pub fn out_channels(&self) -> usize {
        self.out_channels
    }
    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }
    pub fn stride(&self) -> usize {
        self.stride
    }
    pub fn padding(&self) -> usize {
        self.padding
    }
    pub fn weight(&self) -> &Tensor<T> {
        &self.weight
    }
    pub fn bias(&self) -> &Tensor<T> {
        &self.bias
    }

    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let k = self.kernel_size;
        if height + 2 * self.padding < k || width + 2 * self.padding < k {
            return Err(shape_err!(
                "input {}×{} too small for kernel {} with padding {}",
                height,
                width,
                k,
                self.padding
            ));
        }
        Ok((
            (height + 2 * self.padding - k) / self.stride + 1,
            (width + 2 * self.padding - k) / self.stride + 1,
        ))
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
        let (c, h, w) = input.dims3()?;
        if c != self.in_channels {
            return Err(shape_err!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                c
            ));
        }
        let (oh, ow) = self.output_dims(h, w)?;
        Ok((h, w, oh, ow))
    }
}

/// Output positions `o` in `[lo, hi)` whose input index `o*stride + k_off - pad` is in bounds.
#[inline]
fn valid_range(k_off: usize, pad: usize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let lo = if pad > k_off {
        (pad - k_off).div_ceil(stride)
    } else {
        0
    };
    let hi = if in_len + pad > k_off {
        ((in_len + pad - k_off - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

pub fn conv2d<T: Real>(input: &Tensor<T>, spec: &Conv2DSpec<T>) -> Result<Tensor<T>> {
    let (h, w, oh, ow) = spec.check_input(input)?;
    let (ci, co, k, s, p) = (
        spec.in_channels,
        spec.out_channels,
        spec.kernel_size,
        spec.stride,
        spec.padding,
    );
    let inp = input.data();
    let wt = spec.weight.data();
    let mut out = vec![T::zero(); co * oh * ow];

    for oc in 0..co {
        let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        plane.fill(spec.bias.data()[oc]);
        for ic in 0..ci {
            let in_plane = &inp[ic * h * w..(ic + 1) * h * w];
            for ky in 0..k {
                let (ylo, yhi) = valid_range(ky, p, s, h, oh);
                for kx in 0..k {
                    let (xlo, xhi) = valid_range(kx, p, s, w, ow);
                    if xlo >= xhi {
                        continue;
                    }
                    let wv = wt[((oc * ci + ic) * k + ky) * k + kx];
                    for oy in ylo..yhi {
                        let iy = oy * s + ky - p;
                        let in_row = &in_plane[iy * w..(iy + 1) * w];
                        let out_row = &mut plane[oy * ow + xlo..oy * ow + xhi];
                        if s == 1 {
                            let src = &in_row[xlo + kx - p..xhi + kx - p];
                            for (o, &i) in out_row.iter_mut().zip(src) {
                                *o += wv * i;
                            }
                        } else {
                            for (j, o) in out_row.iter_mut().enumerate() {
                                *o += wv * in_row[(xlo + j) * s + kx - p];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![co, oh, ow], out))
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    spec: &Conv2DSpec<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let (h, w, oh, ow) = spec.check_input(input)?;
    let (ci, co, k, s, p) = (
        spec.in_channels,
        spec.out_channels,
        spec.kernel_size,
        spec.stride,
        spec.padding,
    );
    if grad_out.shape() != [co, oh, ow] {
        return Err(shape_err!(
            "conv output gradient has shape {:?}, expected {:?}",
            grad_out.shape(),
            [co, oh, ow]
        ));
    }
    let inp = input.data();
    let g = grad_out.data();
    let wt = spec.weight.data();
    let mut gw = vec![T::zero(); wt.len()];
    let mut gi = if need_input_grad {
        vec![T::zero(); inp.len()]
    } else {
        Vec::new()
    };
    let gb = (0..co)
        .map(|oc| g[oc * oh * ow..(oc + 1) * oh * ow].iter().copied().sum())
        .collect();

    for oc in 0..co {
        let g_plane = &g[oc * oh * ow..(oc + 1) * oh * ow];
        for ic in 0..ci {
            let in_off = ic * h * w;
            for ky in 0..k {
                let (ylo, yhi) = valid_range(ky, p, s, h, oh);
                for kx in 0..k {
                    let (xlo, xhi) = valid_range(kx, p, s, w, ow);
                    if xlo >= xhi {
                        continue;
                    }
                    let widx = ((oc * ci + ic) * k + ky) * k + kx;
                    let wv = wt[widx];
                    let mut acc = T::zero();
                    for oy in ylo..yhi {
                        let iy = oy * s + ky - p;
                        let g_row = &g_plane[oy * ow + xlo..oy * ow + xhi];
                        let row_off = in_off + iy * w;
                        if s == 1 {
                            let lo = row_off + xlo + kx - p;
                            let src = &inp[lo..lo + g_row.len()];
                            for (&gv, &iv) in g_row.iter().zip(src) {
                                acc += gv * iv;
                            }
                            if need_input_grad {
                                let dst = &mut gi[lo..lo + g_row.len()];
                                for (d, &gv) in dst.iter_mut().zip(g_row) {
                                    *d += wv * gv;
                                }
                            }
                        } else {
                            for (j, &gv) in g_row.iter().enumerate() {
                                let idx = row_off + (xlo + j) * s + kx - p;
                                acc += gv * inp[idx];
                                if need_input_grad {
                                    gi[idx] += wv * gv;
                                }
                            }
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }

    Ok(ConvGrads {
        input: need_input_grad.then(|| Tensor::from_parts(vec![ci, h, w], gi)),
        weight: Tensor::from_parts(spec.weight.shape().to_vec(), gw),
        bias: Tensor::from_parts(vec![co], gb),
    })
}
