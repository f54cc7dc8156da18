use serde::{Deserialize, Serialize};

use super::{join, BasicBlock, ConvBn, Init, Parameters};
use crate::cost::{LayerKind, Trace};
use crate::error::{shape_err, Result};
use crate::tensor::{conv2d, relu_inplace, ConvParams, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    /// Stride-2 deconvolution, three residual blocks, 1×1 output conv.
    Higher,
    /// A single 3×3 conv at the backbone resolution.
    SingleConv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub kind: HeadKind,
    pub num_keypoints: usize,
}

impl HeadSpec {
    /// K heatmaps followed by K tagmaps.
    pub fn output_channels(&self) -> usize {
        2 * self.num_keypoints
    }

    /// Output stride relative to the backbone's highest-resolution branch.
    pub fn upscale(&self) -> usize {
        match self.kind {
            HeadKind::Higher => 2,
            HeadKind::SingleConv => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum HeadWeights {
    SingleConv { conv: ConvParams },
    Higher { deconv: ConvBn, blocks: Vec<BasicBlock>, conv: ConvParams },
}

impl HeadWeights {
    pub fn new(spec: &HeadSpec, in_channels: usize, init: &mut Init) -> Self {
        let out = spec.output_channels();
        match spec.kind {
            HeadKind::SingleConv => {
                let conv =
                    ConvParams::new(init.conv_weight([out, in_channels, 3, 3]), 1, 1, 1).with_bias(init.bias(out));
                HeadWeights::SingleConv { conv }
            }
            HeadKind::Higher => {
                let deconv = ConvBn::upsample2x(init, in_channels, in_channels);
                let blocks = (0..3).map(|_| BasicBlock::new(in_channels, init)).collect();
                let conv =
                    ConvParams::new(init.conv_weight([out, in_channels, 1, 1]), 1, 0, 1).with_bias(init.bias(out));
                HeadWeights::Higher { deconv, blocks, conv }
            }
        }
    }
}

/// Head spec, input width and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub spec: HeadSpec,
    pub in_channels: usize,
    pub weights: HeadWeights,
}

impl Head {
    pub fn new(spec: HeadSpec, in_channels: usize, init: &mut Init) -> Self {
        Self { weights: HeadWeights::new(&spec, in_channels, init), spec, in_channels }
    }

    pub fn forward(&self, features: &Tensor) -> Result<(Tensor, Tensor)> {
        head_forward(&self.spec, &self.weights, features)
    }

    pub(crate) fn describe(&self, name: &str, extents: (usize, usize), trace: &mut Trace) -> (usize, usize) {
        match &self.weights {
            HeadWeights::SingleConv { conv } => {
                trace.push(join(name, "conv"), LayerKind::from_conv(conv, false), extents)
            }
            HeadWeights::Higher { deconv, blocks, conv } => {
                let mut e = deconv.describe(&join(name, "deconv"), extents, trace);
                trace.push(join(name, "deconv.relu"), LayerKind::Relu { channels: deconv.out_channels() }, e);
                for (i, b) in blocks.iter().enumerate() {
                    e = b.describe(&join(name, &format!("res{i}")), e, trace);
                }
                trace.push(join(name, "conv"), LayerKind::from_conv(conv, false), e)
            }
        }
    }
}

impl Parameters for Head {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f32])) {
        match &self.weights {
            HeadWeights::SingleConv { conv } => conv.visit(&join(prefix, "conv"), f),
            HeadWeights::Higher { deconv, blocks, conv } => {
                deconv.visit(&join(prefix, "deconv"), f);
                for (i, b) in blocks.iter().enumerate() {
                    b.visit(&join(prefix, &format!("res{i}")), f);
                }
                conv.visit(&join(prefix, "conv"), f);
            }
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f32])) {
        match &mut self.weights {
            HeadWeights::SingleConv { conv } => conv.visit_mut(&join(prefix, "conv"), f),
            HeadWeights::Higher { deconv, blocks, conv } => {
                deconv.visit_mut(&join(prefix, "deconv"), f);
                for (i, b) in blocks.iter_mut().enumerate() {
                    b.visit_mut(&join(prefix, &format!("res{i}")), f);
                }
                conv.visit_mut(&join(prefix, "conv"), f);
            }
        }
    }
}

/// Produces `(heatmaps, tagmaps)` from the highest-resolution features.
///
/// Output channels `[0, K)` are heatmaps and `[K, 2K)` tagmaps.
pub fn head_forward(spec: &HeadSpec, weights: &HeadWeights, features: &Tensor) -> Result<(Tensor, Tensor)> {
    let k = spec.num_keypoints;
    let out = match (spec.kind, weights) {
        (HeadKind::SingleConv, HeadWeights::SingleConv { conv }) => {
            check_output(conv, k)?;
            conv2d(features, conv)?
        }
        (HeadKind::Higher, HeadWeights::Higher { deconv, blocks, conv }) => {
            check_output(conv, k)?;
            let c = deconv.in_channels();
            if features.channels() != c {
                return shape_err(format!("head expects {c} channels, got {}", features.channels()));
            }
            deconv.check(c, deconv.out_channels(), "head deconvolution")?;
            let mut h = deconv.forward(features)?;
            relu_inplace(&mut h);
            for b in blocks {
                h = b.forward(&h)?;
            }
            conv2d(&h, conv)?
        }
        _ => return shape_err(format!("head weights do not match head kind {:?}", spec.kind)),
    };
    Ok((out.slice_channels(0, k)?, out.slice_channels(k, 2 * k)?))
}

fn check_output(conv: &ConvParams, k: usize) -> Result<()> {
    if conv.out_channels() != 2 * k {
        return shape_err(format!("head emits {} channels, expected 2K = {}", conv.out_channels(), 2 * k));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_conv_head_shapes() {
        let spec = HeadSpec { kind: HeadKind::SingleConv, num_keypoints: 17 };
        let head = Head::new(spec, 32, &mut Init::seeded(1));
        let (h, t) = head.forward(&Tensor::full([1, 32, 64, 64], 0.1)).unwrap();
        assert_eq!(h.shape(), [1, 17, 64, 64]);
        assert_eq!(t.shape(), [1, 17, 64, 64]);
    }

    #[test]
    fn higher_head_doubles_extents() {
        let spec = HeadSpec { kind: HeadKind::Higher, num_keypoints: 3 };
        let head = Head::new(spec, 4, &mut Init::seeded(1));
        let (h, t) = head.forward(&Tensor::full([1, 4, 64, 64], 0.1)).unwrap();
        assert_eq!(h.shape(), [1, 3, 128, 128]);
        assert_eq!(t.shape(), [1, 3, 128, 128]);
    }

    #[test]
    fn zero_weights_give_zero_maps() {
        for kind in [HeadKind::SingleConv, HeadKind::Higher] {
            let spec = HeadSpec { kind, num_keypoints: 2 };
            let head = Head::new(spec, 3, &mut Init::zero());
            let x = Tensor::from_fn([1, 3, 8, 8], |_, c, y, x| (c + y) as f32 - x as f32);
            let (h, t) = head.forward(&x).unwrap();
            assert!(h.data().iter().chain(t.data()).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn keypoint_count_mismatch_is_rejected() {
        let head = Head::new(HeadSpec { kind: HeadKind::SingleConv, num_keypoints: 4 }, 3, &mut Init::zero());
        let wrong = HeadSpec { kind: HeadKind::SingleConv, num_keypoints: 5 };
        assert!(head_forward(&wrong, &head.weights, &Tensor::zeros([1, 3, 4, 4])).is_err());
        let other_kind = HeadSpec { kind: HeadKind::Higher, num_keypoints: 4 };
        assert!(head_forward(&other_kind, &head.weights, &Tensor::zeros([1, 3, 4, 4])).is_err());
    }
}
