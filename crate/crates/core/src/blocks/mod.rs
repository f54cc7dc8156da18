//! Network building blocks: convolution units, inverted residual variants,
//! multi-resolution fusion and the two heatmap/tagmap heads.

mod fuse;
mod head;
mod residual;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::{LayerKind, Trace};
use crate::error::{shape_err, Result};
use crate::tensor::{batchnorm_infer, conv2d, conv_transpose2d, depthwise_conv2d, BatchNormParams, ConvParams, Tensor};

pub use fuse::{fuse_exchange, FusePath, FuseWeights};
pub use head::{head_forward, Head, HeadKind, HeadSpec, HeadWeights};
pub use residual::{block_forward, BasicBlock, Block, BlockSpec, BlockVariant, BlockWeights};

/// Weight initialisation policy.
///
/// `Zero` sets every convolution weight and bias to zero and every
/// batchnorm to the identity. `Seeded` draws fan-in scaled uniform weights
/// from a ChaCha stream; construction order fixes the draw order.
pub struct Init {
    rng: Option<ChaCha8Rng>,
}

impl Init {
    pub fn zero() -> Self {
        Self { rng: None }
    }

    pub fn seeded(seed: u64) -> Self {
        Self { rng: Some(ChaCha8Rng::seed_from_u64(seed)) }
    }

    pub fn conv_weight(&mut self, shape: [usize; 4]) -> Tensor {
        let fan_in = (shape[1] * shape[2] * shape[3]).max(1);
        match &mut self.rng {
            None => Tensor::zeros(shape),
            Some(rng) => {
                let bound = (3.0 / fan_in as f32).sqrt();
                Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(-bound..bound))
            }
        }
    }

    pub fn bias(&mut self, channels: usize) -> Vec<f32> {
        match &mut self.rng {
            None => vec![0.0; channels],
            Some(rng) => (0..channels).map(|_| rng.gen_range(-0.05..0.05)).collect(),
        }
    }

    pub fn batchnorm(&mut self, channels: usize) -> BatchNormParams {
        let mut bn = BatchNormParams::identity(channels);
        if let Some(rng) = &mut self.rng {
            for c in 0..channels {
                bn.mean[c] = rng.gen_range(-0.1..0.1);
                bn.variance[c] = rng.gen_range(0.5..1.5);
                bn.scale[c] = rng.gen_range(0.5..1.0);
                bn.shift[c] = rng.gen_range(-0.1..0.1);
            }
        }
        bn
    }
}

/// Visits every named parameter array (weights, biases, batchnorm vectors).
#[allow(clippy::type_complexity)]
pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f32]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f32]));
}

/// Learnable parameter count; batchnorm running statistics are excluded.
pub fn count_learnable(p: &dyn Parameters) -> usize {
    let mut total = 0;
    p.visit("", &mut |n, _, d| {
        if !n.ends_with("mean") && !n.ends_with("variance") {
            total += d.len();
        }
    });
    total
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Parameters for ConvParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f32])) {
        f(&join(prefix, "weight"), &self.weight.shape(), self.weight.data());
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), &[b.len()], b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f32])) {
        let shape = self.weight.shape();
        f(&join(prefix, "weight"), &shape, self.weight.data_mut());
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), &[b.len()], b);
        }
    }
}

impl Parameters for BatchNormParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f32])) {
        let c = [self.channels()];
        f(&join(prefix, "mean"), &c, &self.mean);
        f(&join(prefix, "variance"), &c, &self.variance);
        f(&join(prefix, "scale"), &c, &self.scale);
        f(&join(prefix, "shift"), &c, &self.shift);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f32])) {
        let c = [self.channels()];
        f(&join(prefix, "mean"), &c, &mut self.mean);
        f(&join(prefix, "variance"), &c, &mut self.variance);
        f(&join(prefix, "scale"), &c, &mut self.scale);
        f(&join(prefix, "shift"), &c, &mut self.shift);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    Standard,
    Depthwise,
    Transpose,
}

/// A convolution followed by batchnorm (no activation).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBn {
    pub kind: ConvKind,
    pub conv: ConvParams,
    pub bn: BatchNormParams,
}

impl ConvBn {
    pub fn standard(init: &mut Init, in_c: usize, out_c: usize, k: usize, stride: usize) -> Self {
        let conv = ConvParams::new(init.conv_weight([out_c, in_c, k, k]), stride, k / 2, 1);
        Self { kind: ConvKind::Standard, conv, bn: init.batchnorm(out_c) }
    }

    pub fn depthwise(init: &mut Init, channels: usize, k: usize, stride: usize) -> Self {
        let conv = ConvParams::new(init.conv_weight([channels, 1, k, k]), stride, k / 2, channels);
        Self { kind: ConvKind::Depthwise, conv, bn: init.batchnorm(channels) }
    }

    /// Stride-2, 4×4, padding-1 transposed convolution: doubles extents.
    pub fn upsample2x(init: &mut Init, in_c: usize, out_c: usize) -> Self {
        let conv = ConvParams::new(init.conv_weight([in_c, out_c, 4, 4]), 2, 1, 1);
        Self { kind: ConvKind::Transpose, conv, bn: init.batchnorm(out_c) }
    }

    pub fn in_channels(&self) -> usize {
        match self.kind {
            ConvKind::Transpose => self.conv.out_channels(),
            _ => self.conv.in_channels(),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.bn.channels()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = match self.kind {
            ConvKind::Standard => conv2d(x, &self.conv)?,
            ConvKind::Depthwise => depthwise_conv2d(x, &self.conv)?,
            ConvKind::Transpose => conv_transpose2d(x, &self.conv)?,
        };
        batchnorm_infer(&y, &self.bn)
    }

    pub(crate) fn check(&self, in_c: usize, out_c: usize, what: &str) -> Result<()> {
        if self.in_channels() != in_c || self.out_channels() != out_c {
            return shape_err(format!(
                "{what}: expected {in_c}->{out_c} channels, weights give {}->{}",
                self.in_channels(),
                self.out_channels()
            ));
        }
        let conv_out = match self.kind {
            ConvKind::Transpose => self.conv.in_channels(),
            _ => self.conv.out_channels(),
        };
        if conv_out != self.bn.channels() {
            return shape_err(format!("{what}: batchnorm width differs from convolution output"));
        }
        Ok(())
    }

    pub(crate) fn layer_kind(&self) -> LayerKind {
        LayerKind::from_conv(&self.conv, self.kind == ConvKind::Transpose)
    }

    /// Records the convolution and its batchnorm; returns the output extents.
    pub(crate) fn describe(&self, name: &str, extents: (usize, usize), trace: &mut Trace) -> (usize, usize) {
        let out = trace.push(join(name, "conv"), self.layer_kind(), extents);
        trace.push(join(name, "bn"), LayerKind::BatchNorm { channels: self.out_channels() }, out);
        out
    }
}

impl Parameters for ConvBn {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f32])) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.bn.visit(&join(prefix, "bn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f32])) {
        self.conv.visit_mut(&join(prefix, "conv"), f);
        self.bn.visit_mut(&join(prefix, "bn"), f);
    }
}
