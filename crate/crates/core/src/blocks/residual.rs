use serde::{Deserialize, Serialize};

use super::{join, ConvBn, Init, Parameters};
use crate::cost::{LayerKind, LayerRecord, Trace};
use crate::error::{config_err, shape_err, Result};
use crate::tensor::{add_assign, relu_inplace, Tensor};

/// The four inverted-residual variants compared in the ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockVariant {
    /// Plain inverted residual: expand, one depthwise conv, project.
    #[serde(rename = "ir")]
    Ir,
    /// Inverted residual with a chain of depthwise convs.
    #[serde(rename = "ir+dw")]
    IrDw,
    /// Inverted residual with the inner shortcut around its depthwise conv.
    #[serde(rename = "ir+sc")]
    IrSc,
    /// Dense inverted residual: depthwise chain plus inner shortcut.
    #[serde(rename = "dir")]
    Dir,
}

impl BlockVariant {
    pub fn label(self) -> &'static str {
        match self {
            BlockVariant::Ir => "IR",
            BlockVariant::IrDw => "IR+DW",
            BlockVariant::IrSc => "IR+SC",
            BlockVariant::Dir => "DIR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub variant: BlockVariant,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub expansion: usize,
    /// Number of 3×3 depthwise convolutions in the chain.
    pub num_dw: usize,
}

impl BlockSpec {
    /// Stride-1 DIR block with two depthwise convs and expansion 6.
    pub fn dir(channels: usize) -> Self {
        Self {
            variant: BlockVariant::Dir,
            in_channels: channels,
            out_channels: channels,
            stride: 1,
            expansion: 6,
            num_dw: 2,
        }
    }

    pub fn with_variant(mut self, variant: BlockVariant, num_dw: usize) -> Self {
        self.variant = variant;
        self.num_dw = num_dw;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.stride == 0 || self.expansion == 0 {
            return config_err(format!("block {self:?} has a zero field"));
        }
        if !(1..=4).contains(&self.num_dw) {
            return config_err(format!("num_dw must be in 1..=4, got {}", self.num_dw));
        }
        if matches!(self.variant, BlockVariant::Ir | BlockVariant::IrSc) && self.num_dw != 1 {
            return config_err(format!(
                "{} uses exactly one depthwise conv, got {}",
                self.variant.label(),
                self.num_dw
            ));
        }
        Ok(())
    }

    pub fn expanded_channels(&self) -> usize {
        self.in_channels * self.expansion
    }

    pub fn has_outer_shortcut(&self) -> bool {
        self.stride == 1 && self.in_channels == self.out_channels
    }

    /// The inner shortcut spans the depthwise chain, so it needs the chain to
    /// keep its extents.
    pub fn has_inner_shortcut(&self) -> bool {
        matches!(self.variant, BlockVariant::IrSc | BlockVariant::Dir) && self.stride == 1
    }
}

/// Expand 1×1 → depthwise 3×3 chain → project 1×1, each with batchnorm.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub expand: ConvBn,
    pub depthwise: Vec<ConvBn>,
    pub project: ConvBn,
}

impl BlockWeights {
    pub fn new(spec: &BlockSpec, init: &mut Init) -> Result<Self> {
        spec.validate()?;
        let ce = spec.expanded_channels();
        let expand = ConvBn::standard(init, spec.in_channels, ce, 1, 1);
        let depthwise =
            (0..spec.num_dw).map(|i| ConvBn::depthwise(init, ce, 3, if i == 0 { spec.stride } else { 1 })).collect();
        let project = ConvBn::standard(init, ce, spec.out_channels, 1, 1);
        Ok(Self { expand, depthwise, project })
    }

    fn check(&self, spec: &BlockSpec) -> Result<()> {
        spec.validate()?;
        let ce = spec.expanded_channels();
        self.expand.check(spec.in_channels, ce, "expand")?;
        if self.depthwise.len() != spec.num_dw {
            return shape_err(format!("{} depthwise convs for num_dw {}", self.depthwise.len(), spec.num_dw));
        }
        for (i, dw) in self.depthwise.iter().enumerate() {
            dw.check(ce, ce, "depthwise")?;
            let stride = if i == 0 { spec.stride } else { 1 };
            if !dw.conv.is_depthwise() || dw.conv.stride != stride || dw.conv.kernel() != (3, 3) {
                return shape_err(format!("depthwise conv {i} is not a 3x3 depthwise conv with stride {stride}"));
            }
        }
        self.project.check(ce, spec.out_channels, "project")
    }
}

/// Runs one inverted-residual block.
///
/// `relu(bn(expand(x)))` feeds the depthwise chain (relu after every conv);
/// the inner shortcut adds the chain input to its output; the projection is
/// linear; the outer shortcut adds `x` when shapes allow.
pub fn block_forward(spec: &BlockSpec, weights: &BlockWeights, input: &Tensor) -> Result<Tensor> {
    weights.check(spec)?;
    if input.channels() != spec.in_channels {
        return shape_err(format!("block expects {} channels, got {}", spec.in_channels, input.channels()));
    }
    let mut h = weights.expand.forward(input)?;
    relu_inplace(&mut h);
    let mut d = h.clone();
    for dw in &weights.depthwise {
        d = dw.forward(&d)?;
        relu_inplace(&mut d);
    }
    if spec.has_inner_shortcut() {
        add_assign(&mut d, &h)?;
    }
    let mut out = weights.project.forward(&d)?;
    if spec.has_outer_shortcut() {
        add_assign(&mut out, input)?;
    }
    Ok(out)
}

/// A block spec together with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub spec: BlockSpec,
    pub weights: BlockWeights,
}

impl Block {
    pub fn new(spec: BlockSpec, init: &mut Init) -> Result<Self> {
        Ok(Self { weights: BlockWeights::new(&spec, init)?, spec })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        block_forward(&self.spec, &self.weights, x)
    }

    /// Per-layer costs of this block on an input of the given extents.
    pub fn trace(&self, extents: (usize, usize)) -> Result<Vec<LayerRecord>> {
        let mut t = Trace::new();
        self.describe("block", extents, &mut t);
        t.finish()
    }

    pub(crate) fn describe(&self, name: &str, extents: (usize, usize), trace: &mut Trace) -> (usize, usize) {
        let ce = self.spec.expanded_channels();
        let e = self.weights.expand.describe(&join(name, "expand"), extents, trace);
        trace.push(join(name, "expand.relu"), LayerKind::Relu { channels: ce }, e);
        let mut d = e;
        for (i, dw) in self.weights.depthwise.iter().enumerate() {
            let n = join(name, &format!("dw{i}"));
            d = dw.describe(&n, d, trace);
            trace.push(join(&n, "relu"), LayerKind::Relu { channels: ce }, d);
        }
        if self.spec.has_inner_shortcut() {
            trace.push(join(name, "inner_add"), LayerKind::Add { channels: ce }, d);
        }
        let out = self.weights.project.describe(&join(name, "project"), d, trace);
        if self.spec.has_outer_shortcut() {
            trace.push(join(name, "outer_add"), LayerKind::Add { channels: self.spec.out_channels }, out);
        }
        out
    }
}

impl Parameters for Block {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f32])) {
        self.weights.expand.visit(&join(prefix, "expand"), f);
        for (i, dw) in self.weights.depthwise.iter().enumerate() {
            dw.visit(&join(prefix, &format!("dw{i}")), f);
        }
        self.weights.project.visit(&join(prefix, "project"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f32])) {
        self.weights.expand.visit_mut(&join(prefix, "expand"), f);
        for (i, dw) in self.weights.depthwise.iter_mut().enumerate() {
            dw.visit_mut(&join(prefix, &format!("dw{i}")), f);
        }
        self.weights.project.visit_mut(&join(prefix, "project"), f);
    }
}

/// Two 3×3 conv-bn layers with an identity shortcut, relu after the sum.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicBlock {
    pub conv1: ConvBn,
    pub conv2: ConvBn,
}

impl BasicBlock {
    pub fn new(channels: usize, init: &mut Init) -> Self {
        Self {
            conv1: ConvBn::standard(init, channels, channels, 3, 1),
            conv2: ConvBn::standard(init, channels, channels, 3, 1),
        }
    }

    pub fn channels(&self) -> usize {
        self.conv1.in_channels()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let c = self.channels();
        self.conv1.check(c, c, "basic block conv1")?;
        self.conv2.check(c, c, "basic block conv2")?;
        let mut h = self.conv1.forward(x)?;
        relu_inplace(&mut h);
        let mut out = self.conv2.forward(&h)?;
        add_assign(&mut out, x)?;
        relu_inplace(&mut out);
        Ok(out)
    }

    pub(crate) fn describe(&self, name: &str, extents: (usize, usize), trace: &mut Trace) -> (usize, usize) {
        let c = self.channels();
        let a = self.conv1.describe(&join(name, "conv1"), extents, trace);
        trace.push(join(name, "relu1"), LayerKind::Relu { channels: c }, a);
        let b = self.conv2.describe(&join(name, "conv2"), a, trace);
        trace.push(join(name, "add"), LayerKind::Add { channels: c }, b);
        trace.push(join(name, "relu2"), LayerKind::Relu { channels: c }, b);
        b
    }
}

impl Parameters for BasicBlock {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f32])) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f32])) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{add, batchnorm_infer, conv2d, depthwise_conv2d, relu};

    fn input(c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_fn([1, c, h, w], |_, ch, y, x| ((ch * 37 + y * 11 + x * 5) % 17) as f32 * 0.1 - 0.8)
    }

    #[test]
    fn zero_weights_leave_only_the_outer_shortcut() {
        for variant in [BlockVariant::Ir, BlockVariant::IrDw, BlockVariant::IrSc, BlockVariant::Dir] {
            let n = if matches!(variant, BlockVariant::IrDw | BlockVariant::Dir) { 2 } else { 1 };
            let spec = BlockSpec::dir(4).with_variant(variant, n);
            let block = Block::new(spec, &mut Init::zero()).unwrap();
            let x = input(4, 5, 6);
            assert_eq!(block.forward(&x).unwrap(), x, "{variant:?}");
        }
    }

    #[test]
    fn variant_num_dw_consistency() {
        assert!(BlockSpec::dir(4).with_variant(BlockVariant::Ir, 2).validate().is_err());
        assert!(BlockSpec::dir(4).with_variant(BlockVariant::IrSc, 3).validate().is_err());
        assert!(BlockSpec::dir(4).with_variant(BlockVariant::Dir, 5).validate().is_err());
        assert!(BlockSpec::dir(4).with_variant(BlockVariant::Dir, 0).validate().is_err());
        assert!(BlockSpec::dir(4).with_variant(BlockVariant::IrDw, 4).validate().is_ok());
    }

    #[test]
    fn single_dw_without_inner_shortcut_is_plain_ir() {
        let spec_ir = BlockSpec::dir(3).with_variant(BlockVariant::Ir, 1);
        let spec_dw = BlockSpec::dir(3).with_variant(BlockVariant::IrDw, 1);
        let weights = BlockWeights::new(&spec_ir, &mut Init::seeded(3)).unwrap();
        let x = input(3, 6, 6);
        let a = block_forward(&spec_ir, &weights, &x).unwrap();
        let b = block_forward(&spec_dw, &weights, &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dir_matches_primitive_composition() {
        let spec = BlockSpec::dir(4);
        let w = BlockWeights::new(&spec, &mut Init::seeded(9)).unwrap();
        let x = input(4, 7, 5);

        let bn = |t: Tensor, u: &ConvBn| batchnorm_infer(&t, &u.bn).unwrap();
        let h = relu(&bn(conv2d(&x, &w.expand.conv).unwrap(), &w.expand));
        let d0 = relu(&bn(depthwise_conv2d(&h, &w.depthwise[0].conv).unwrap(), &w.depthwise[0]));
        let d1 = relu(&bn(depthwise_conv2d(&d0, &w.depthwise[1].conv).unwrap(), &w.depthwise[1]));
        let inner = add(&d1, &h).unwrap();
        let p = bn(conv2d(&inner, &w.project.conv).unwrap(), &w.project);
        let expected = add(&p, &x).unwrap();

        let got = block_forward(&spec, &w, &x).unwrap();
        assert!(got.max_abs_diff(&expected).unwrap() < 1e-6);
    }

    #[test]
    fn shortcuts_do_not_change_shapes() {
        let x = input(4, 8, 8);
        for (out_c, stride) in [(4, 1), (6, 1), (4, 2), (8, 2)] {
            let mut shapes = Vec::new();
            for variant in [BlockVariant::Ir, BlockVariant::IrSc, BlockVariant::IrDw, BlockVariant::Dir] {
                let spec = BlockSpec { variant, in_channels: 4, out_channels: out_c, stride, expansion: 2, num_dw: 1 };
                let block = Block::new(spec, &mut Init::seeded(1)).unwrap();
                shapes.push(block.forward(&x).unwrap().shape());
            }
            assert!(shapes.iter().all(|s| *s == [1, out_c, 8 / stride, 8 / stride]));
        }
    }

    #[test]
    fn weight_shape_mismatch_is_rejected() {
        let spec = BlockSpec::dir(4);
        let mut w = BlockWeights::new(&spec, &mut Init::zero()).unwrap();
        w.depthwise.pop();
        assert!(block_forward(&spec, &w, &input(4, 4, 4)).is_err());
        let w = BlockWeights::new(&spec, &mut Init::zero()).unwrap();
        assert!(block_forward(&spec, &w, &input(3, 4, 4)).is_err());
    }

    #[test]
    fn basic_block_zero_weights_is_relu_identity() {
        let b = BasicBlock::new(3, &mut Init::zero());
        let x = input(3, 4, 4);
        assert_eq!(b.forward(&x).unwrap(), relu(&x));
    }
}
