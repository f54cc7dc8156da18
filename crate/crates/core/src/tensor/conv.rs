use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{shape_err, Result};

/// Weights and geometry of a (possibly grouped) 2-D convolution.
///
/// `weight` has shape (out-channels, in-channels / groups, kH, kW). For
/// [`conv_transpose2d`] the same tensor is read as the adjoint mapping, so the
/// transposed layer maps `out-channels` back to `in-channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Option<Vec<f32>>,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvParams {
    pub fn new(weight: Tensor, stride: usize, padding: usize, groups: usize) -> Self {
        Self { weight, bias: None, stride, padding, groups }
    }

    pub fn with_bias(mut self, bias: Vec<f32>) -> Self {
        self.bias = Some(bias);
        self
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1] * self.groups
    }

    pub fn kernel(&self) -> (usize, usize) {
        let s = self.weight.shape();
        (s[2], s[3])
    }

    pub fn is_depthwise(&self) -> bool {
        let [o, ipg, _, _] = self.weight.shape();
        ipg == 1 && self.groups == o
    }

    fn validate(&self) -> Result<()> {
        let [o, ipg, kh, kw] = self.weight.shape();
        if self.stride == 0 {
            return shape_err("stride must be positive");
        }
        if self.groups == 0 || o % self.groups != 0 {
            return shape_err(format!("{o} output channels not divisible by {} groups", self.groups));
        }
        if ipg == 0 || kh == 0 || kw == 0 {
            return shape_err(format!("degenerate kernel {:?}", self.weight.shape()));
        }
        Ok(())
    }

    /// Output extents of the forward convolution on an `h`×`w` input.
    pub fn output_extents(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel();
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < kh || pw < kw {
            return shape_err(format!("kernel {kh}x{kw} does not fit padded input {ph}x{pw}"));
        }
        let out = ((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1);
        if out.0 == 0 || out.1 == 0 {
            return shape_err("zero-sized output");
        }
        Ok(out)
    }

    /// Output extents of the transposed convolution on an `h`×`w` input.
    pub fn transpose_output_extents(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel();
        if self.stride > kh || self.stride > kw {
            return shape_err(format!("stride {} exceeds kernel {kh}x{kw}", self.stride));
        }
        if h == 0 || w == 0 {
            return shape_err("empty input");
        }
        let full = ((h - 1) * self.stride + kh, (w - 1) * self.stride + kw);
        let crop = 2 * self.padding;
        if full.0 <= crop || full.1 <= crop {
            return shape_err("padding removes the whole output");
        }
        Ok((full.0 - crop, full.1 - crop))
    }
}

/// Range `[lo, hi)` of output indices `o` whose source index
/// `o * stride + k - pad` falls inside `[0, in_len)`.
#[inline]
fn valid_range(k: usize, pad: usize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let top = in_len as isize - 1 + pad as isize - k as isize;
    if top < 0 {
        return (0, 0);
    }
    let hi = (top as usize / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

struct Geometry {
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

/// `out_plane += correlate(in_plane, kernel)`, looping ky, kx, oy, ox.
#[inline]
fn accumulate_plane(out: &mut [f32], input: &[f32], kernel: &[f32], kh: usize, kw: usize, g: &Geometry) {
    for ky in 0..kh {
        let (oy_lo, oy_hi) = valid_range(ky, g.pad, g.stride, g.h, g.oh);
        for kx in 0..kw {
            let wv = kernel[ky * kw + kx];
            let (ox_lo, ox_hi) = valid_range(kx, g.pad, g.stride, g.w, g.ow);
            if ox_lo >= ox_hi {
                continue;
            }
            for oy in oy_lo..oy_hi {
                let iy = oy * g.stride + ky - g.pad;
                let in_row = &input[iy * g.w..(iy + 1) * g.w];
                let out_row = &mut out[oy * g.ow + ox_lo..oy * g.ow + ox_hi];
                let ix0 = ox_lo * g.stride + kx - g.pad;
                if g.stride == 1 {
                    let src = &in_row[ix0..ix0 + out_row.len()];
                    for (o, i) in out_row.iter_mut().zip(src) {
                        *o += wv * i;
                    }
                } else {
                    for (j, o) in out_row.iter_mut().enumerate() {
                        *o += wv * in_row[ix0 + j * g.stride];
                    }
                }
            }
        }
    }
}

fn init_output(shape: [usize; 4], bias: Option<&Vec<f32>>) -> Result<Tensor> {
    let mut out = Tensor::zeros(shape);
    if let Some(bias) = bias {
        if bias.len() != shape[1] {
            return shape_err(format!("bias length {} for {} channels", bias.len(), shape[1]));
        }
        for n in 0..shape[0] {
            for (c, b) in bias.iter().enumerate() {
                out.plane_mut(n, c).fill(*b);
            }
        }
    }
    Ok(out)
}

/// Standard (grouped) convolution with zero padding.
pub fn conv2d(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    params.validate()?;
    let [n, cin, h, w] = input.shape();
    let [cout, ipg, kh, kw] = params.weight.shape();
    if cin != params.in_channels() {
        return shape_err(format!("input has {cin} channels, convolution expects {}", params.in_channels()));
    }
    let (oh, ow) = params.output_extents(h, w)?;
    let opg = cout / params.groups;
    let geo = Geometry { h, w, oh, ow, stride: params.stride, pad: params.padding };
    let mut out = init_output([n, cout, oh, ow], params.bias.as_ref())?;
    let weights = params.weight.data();
    let ksize = kh * kw;
    for b in 0..n {
        for oc in 0..cout {
            let group = oc / opg;
            let start = out.index(b, oc, 0, 0);
            let out_plane = &mut out.data_mut()[start..start + oh * ow];
            for icg in 0..ipg {
                let ic = group * ipg + icg;
                let kernel = &weights[(oc * ipg + icg) * ksize..(oc * ipg + icg + 1) * ksize];
                accumulate_plane(out_plane, input.plane(b, ic), kernel, kh, kw, &geo);
            }
        }
    }
    out.ensure_finite("conv2d")
}

/// Depthwise convolution: one kernel per channel, `groups == channels`.
pub fn depthwise_conv2d(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    params.validate()?;
    let [n, c, h, w] = input.shape();
    let [cout, ipg, kh, kw] = params.weight.shape();
    if params.groups != c || cout != c || ipg != 1 {
        return shape_err(format!(
            "depthwise convolution needs groups = channels = {c} and one kernel per channel, got groups {} weight {:?}",
            params.groups,
            params.weight.shape()
        ));
    }
    let (oh, ow) = params.output_extents(h, w)?;
    let geo = Geometry { h, w, oh, ow, stride: params.stride, pad: params.padding };
    let mut out = init_output([n, c, oh, ow], params.bias.as_ref())?;
    let ksize = kh * kw;
    for b in 0..n {
        for ch in 0..c {
            let kernel = &params.weight.data()[ch * ksize..(ch + 1) * ksize];
            let start = out.index(b, ch, 0, 0);
            let out_plane = &mut out.data_mut()[start..start + oh * ow];
            accumulate_plane(out_plane, input.plane(b, ch), kernel, kh, kw, &geo);
        }
    }
    out.ensure_finite("depthwise_conv2d")
}

/// Transposed convolution (the adjoint of [`conv2d`] with the same params).
///
/// Input channels correspond to the weight's first axis; the output has
/// `in_channels()` channels and extents `(h - 1) * stride + k - 2 * padding`.
pub fn conv_transpose2d(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    params.validate()?;
    let [n, cin, h, w] = input.shape();
    let [wo, ipg, kh, kw] = params.weight.shape();
    if cin != wo {
        return shape_err(format!("input has {cin} channels, transposed convolution expects {wo}"));
    }
    let (oh, ow) = params.transpose_output_extents(h, w)?;
    let cout = params.in_channels();
    let opg = wo / params.groups;
    let (s, pad) = (params.stride, params.padding);
    let mut out = init_output([n, cout, oh, ow], params.bias.as_ref())?;
    let weights = params.weight.data();
    let ksize = kh * kw;
    for b in 0..n {
        for oc in 0..cout {
            let group = oc / ipg;
            let icg = oc % ipg;
            let start = out.index(b, oc, 0, 0);
            let out_plane = &mut out.data_mut()[start..start + oh * ow];
            for src in group * opg..(group + 1) * opg {
                let in_plane = input.plane(b, src);
                let kernel = &weights[(src * ipg + icg) * ksize..(src * ipg + icg + 1) * ksize];
                for ky in 0..kh {
                    let (iy_lo, iy_hi) = valid_range(ky, pad, s, oh, h);
                    for kx in 0..kw {
                        let wv = kernel[ky * kw + kx];
                        let (ix_lo, ix_hi) = valid_range(kx, pad, s, ow, w);
                        for iy in iy_lo..iy_hi {
                            let oy = iy * s + ky - pad;
                            let in_row = &in_plane[iy * w..(iy + 1) * w];
                            let out_row = &mut out_plane[oy * ow..(oy + 1) * ow];
                            for ix in ix_lo..ix_hi {
                                out_row[ix * s + kx - pad] += wv * in_row[ix];
                            }
                        }
                    }
                }
            }
        }
    }
    out.ensure_finite("conv_transpose2d")
}
