//! Declarative multi-branch networks: configs, construction and inference.
//!
//! A network is a stem (two stride-2 conv-bn-relu units reaching 1/4
//! resolution), a sequence of stages and a head. Stage `s` runs `s + 1`
//! parallel branches; branch `i` sits at `1 / 2^(i + 2)` of the input
//! resolution. Entering a stage, existing branches are adapted to the new
//! channel counts when they differ and one new branch is spawned from the
//! lowest-resolution one by a stride-2 conv. Every stage ends with a fusion;
//! the last one keeps only the highest-resolution output, which feeds the head.

mod config;
mod weights;

use crate::blocks::{count_learnable, fuse_exchange, join, Block, ConvBn, FuseWeights, Head, Init, Parameters};
use crate::cost::{Bucket, LayerKind, LayerRecord, Trace};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{relu_inplace, Tensor};

pub use config::{balance_block_counts, BlockTemplate, NetworkSpec, StageConfig, StemSpec, CONFIG_DIR_ENV, PRESETS};
pub use weights::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

/// Conv-bn-relu.
#[derive(Debug, Clone, PartialEq)]
struct Unit(ConvBn);

impl Unit {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = self.0.forward(x)?;
        relu_inplace(&mut y);
        Ok(y)
    }

    fn describe(&self, name: &str, extents: (usize, usize), trace: &mut Trace) -> (usize, usize) {
        let e = self.0.describe(name, extents, trace);
        trace.push(join(name, "relu"), LayerKind::Relu { channels: self.0.out_channels() }, e);
        e
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Stage {
    /// One entry per branch; `None` passes the previous stage's output through.
    transitions: Vec<Option<Unit>>,
    branches: Vec<Vec<Block>>,
    fuse: FuseWeights,
}

/// A built network. Immutable after construction, so `forward` may be called
/// from several threads at once.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    stem: [Unit; 2],
    stages: Vec<Stage>,
    head: Head,
}

fn in_layer(name: &str) -> impl FnOnce(Error) -> Error + '_ {
    move |e| match e {
        Error::NonFinite(m) => Error::NonFinite(format!("{name} ({m})")),
        Error::Shape(m) => Error::Shape(format!("{name}: {m}")),
        other => other,
    }
}

impl Network {
    pub fn build(spec: NetworkSpec, init: &mut Init) -> Result<Self> {
        spec.validate()?;
        let w = spec.stem.channels;
        let stem =
            [Unit(ConvBn::standard(init, spec.stem.in_channels, w, 3, 2)), Unit(ConvBn::standard(init, w, w, 3, 2))];
        let mut prev = vec![w];
        let mut stages = Vec::with_capacity(spec.stages.len());
        for (s, cfg) in spec.stages.iter().enumerate() {
            let transitions = cfg
                .channels
                .iter()
                .enumerate()
                .map(|(i, &c)| match prev.get(i) {
                    Some(&p) if p == c => None,
                    Some(&p) => Some(Unit(ConvBn::standard(init, p, c, 3, 1))),
                    None => Some(Unit(ConvBn::standard(init, prev[i - 1], c, 3, 2))),
                })
                .collect();
            let branches = cfg
                .channels
                .iter()
                .zip(&cfg.blocks)
                .map(|(&c, &n)| (0..n).map(|_| Block::new(cfg.block.spec(c), init)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            let outputs = if s + 1 == spec.stages.len() { 1 } else { cfg.channels.len() };
            let fuse = FuseWeights::new(&cfg.channels, outputs, init);
            stages.push(Stage { transitions, branches, fuse });
            prev = cfg.channels.clone();
        }
        let head = Head::new(spec.head, spec.stages.last().expect("validated").channels[0], init);
        Ok(Self { spec, stem, stages, head })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    /// Extents of the heatmaps produced for an `h`×`w` input.
    pub fn output_extents(&self, h: usize, w: usize) -> (usize, usize) {
        let f = self.spec.head.upscale();
        (h / 4 * f, w / 4 * f)
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let m = self.spec.input_multiple();
        let [n, c, h, w] = image.shape();
        if n != 1 || c != self.spec.stem.in_channels {
            return shape_err(format!("expected a 1x{}xHxW image, got {n}x{c}x{h}x{w}", self.spec.stem.in_channels));
        }
        if h == 0 || w == 0 || h % m != 0 || w % m != 0 {
            return shape_err(format!("input extents {h}x{w} must be positive multiples of {m}"));
        }
        Ok(())
    }

    /// Highest-resolution backbone features after the final fusion.
    pub fn features(&self, image: &Tensor) -> Result<Tensor> {
        self.check_input(image)?;
        let mut x = self.stem[0].forward(image).map_err(in_layer("stem.0"))?;
        x = self.stem[1].forward(&x).map_err(in_layer("stem.1"))?;
        let mut xs = vec![x];
        for (s, stage) in self.stages.iter().enumerate() {
            let mut branches = Vec::with_capacity(stage.branches.len());
            for (i, t) in stage.transitions.iter().enumerate() {
                let name = format!("stage{}.transition{i}", s + 1);
                branches.push(match t {
                    None => xs[i].clone(),
                    Some(u) => u.forward(xs.get(i).unwrap_or_else(|| &xs[i - 1])).map_err(in_layer(&name))?,
                });
            }
            for (i, (h, blocks)) in branches.iter_mut().zip(&stage.branches).enumerate() {
                for (b, block) in blocks.iter().enumerate() {
                    *h = block.forward(h).map_err(in_layer(&format!("stage{}.branch{i}.block{b}", s + 1)))?;
                }
            }
            xs = fuse_exchange(&branches, &stage.fuse).map_err(in_layer(&format!("stage{}.fuse", s + 1)))?;
        }
        Ok(xs.swap_remove(0))
    }

    /// Runs the network on a `1×3×H×W` image; returns `(heatmaps, tagmaps)`.
    pub fn forward(&self, image: &Tensor) -> Result<(Tensor, Tensor)> {
        let features = self.features(image)?;
        self.head.forward(&features).map_err(in_layer("head"))
    }

    /// Layer-by-layer structural record for an input of the given extents.
    pub fn trace(&self, extents: (usize, usize)) -> Result<Vec<LayerRecord>> {
        let m = self.spec.input_multiple();
        if extents.0 == 0 || extents.1 == 0 || !extents.0.is_multiple_of(m) || !extents.1.is_multiple_of(m) {
            return shape_err(format!("input extents {}x{} must be positive multiples of {m}", extents.0, extents.1));
        }
        let mut trace = Trace::new();
        trace.set_bucket(Bucket::Stem);
        let mut e = self.stem[0].describe("stem.0", extents, &mut trace);
        e = self.stem[1].describe("stem.1", e, &mut trace);
        let mut es = vec![e];
        for (s, stage) in self.stages.iter().enumerate() {
            let prefix = format!("stage{}", s + 1);
            let mut branch_extents = Vec::with_capacity(stage.branches.len());
            for (i, t) in stage.transitions.iter().enumerate() {
                trace.set_bucket(Bucket::Resolution(i));
                let src = es.get(i).copied().unwrap_or_else(|| es[i - 1]);
                branch_extents.push(match t {
                    None => src,
                    Some(u) => u.describe(&join(&prefix, &format!("transition{i}")), src, &mut trace),
                });
            }
            for (i, blocks) in stage.branches.iter().enumerate() {
                trace.set_bucket(Bucket::Resolution(i));
                for (b, block) in blocks.iter().enumerate() {
                    block.describe(&join(&prefix, &format!("branch{i}.block{b}")), branch_extents[i], &mut trace);
                }
            }
            stage.fuse.describe(&join(&prefix, "fuse"), &branch_extents, &mut trace, &Bucket::Resolution);
            es = branch_extents;
            es.truncate(stage.fuse.num_outputs());
        }
        trace.set_bucket(Bucket::Head);
        self.head.describe("head", es[0], &mut trace);
        trace.finish()
    }

    /// Names and shapes of every parameter array, in visiting order.
    pub fn inventory(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit("", &mut |n, s, _| out.push((n.to_string(), s.to_vec())));
        out
    }

    /// Learnable parameter count; batchnorm running statistics are excluded.
    pub fn num_parameters(&self) -> usize {
        count_learnable(self)
    }
}

impl Parameters for Network {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f32])) {
        for (i, u) in self.stem.iter().enumerate() {
            u.0.visit(&join(prefix, &format!("stem.{i}")), f);
        }
        for (s, stage) in self.stages.iter().enumerate() {
            let p = join(prefix, &format!("stage{}", s + 1));
            for (i, t) in stage.transitions.iter().enumerate() {
                if let Some(u) = t {
                    u.0.visit(&join(&p, &format!("transition{i}")), f);
                }
            }
            for (i, blocks) in stage.branches.iter().enumerate() {
                for (b, block) in blocks.iter().enumerate() {
                    block.visit(&join(&p, &format!("branch{i}.block{b}")), f);
                }
            }
            stage.fuse.visit(&join(&p, "fuse"), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f32])) {
        for (i, u) in self.stem.iter_mut().enumerate() {
            u.0.visit_mut(&join(prefix, &format!("stem.{i}")), f);
        }
        for (s, stage) in self.stages.iter_mut().enumerate() {
            let p = join(prefix, &format!("stage{}", s + 1));
            for (i, t) in stage.transitions.iter_mut().enumerate() {
                if let Some(u) = t {
                    u.0.visit_mut(&join(&p, &format!("transition{i}")), f);
                }
            }
            for (i, blocks) in stage.branches.iter_mut().enumerate() {
                for (b, block) in blocks.iter_mut().enumerate() {
                    block.visit_mut(&join(&p, &format!("branch{i}.block{b}")), f);
                }
            }
            stage.fuse.visit_mut(&join(&p, "fuse"), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

/// Builds `spec` with the given initialisation.
pub fn build_network(spec: NetworkSpec, init: &mut Init) -> Result<Network> {
    Network::build(spec, init)
}

/// `(heatmaps, tagmaps)` for one image.
pub fn network_forward(net: &Network, image: &Tensor) -> Result<(Tensor, Tensor)> {
    net.forward(image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{BlockVariant, HeadKind, HeadSpec};

    fn toy(kind: HeadKind) -> NetworkSpec {
        NetworkSpec {
            name: "toy".into(),
            width: 4,
            num_stages: 2,
            stem: StemSpec { in_channels: 3, channels: 4 },
            stages: vec![
                StageConfig { channels: vec![4], blocks: vec![1], block: BlockTemplate::dir() },
                StageConfig {
                    channels: vec![4, 8],
                    blocks: vec![1, 2],
                    block: BlockTemplate { variant: BlockVariant::Dir, expansion: 2, num_dw: 2 },
                },
            ],
            head: HeadSpec { kind, num_keypoints: 3 },
        }
    }

    fn image(h: usize, w: usize) -> Tensor {
        Tensor::from_fn([1, 3, h, w], |_, c, y, x| ((c * 31 + y * 7 + x * 3) % 19) as f32 / 19.0 - 0.5)
    }

    #[test]
    fn shapes_follow_head_kind() {
        let net = Network::build(toy(HeadKind::SingleConv), &mut Init::seeded(1)).unwrap();
        let (h, t) = net.forward(&image(32, 64)).unwrap();
        assert_eq!(h.shape(), [1, 3, 8, 16]);
        assert_eq!(t.shape(), [1, 3, 8, 16]);
        let net = Network::build(toy(HeadKind::Higher), &mut Init::seeded(1)).unwrap();
        let (h, _) = net.forward(&image(32, 32)).unwrap();
        assert_eq!(h.shape(), [1, 3, 16, 16]);
        assert_eq!(net.output_extents(32, 32), (16, 16));
    }

    #[test]
    fn zero_init_gives_zero_maps() {
        let net = Network::build(toy(HeadKind::Higher), &mut Init::zero()).unwrap();
        let (h, t) = net.forward(&image(32, 32)).unwrap();
        assert!(h.data().iter().chain(t.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn indivisible_or_wrong_inputs_are_rejected() {
        let net = Network::build(toy(HeadKind::SingleConv), &mut Init::zero()).unwrap();
        assert_eq!(net.spec().input_multiple(), 8);
        assert!(net.forward(&image(12, 16)).is_err());
        assert!(net.forward(&Tensor::zeros([1, 2, 16, 16])).is_err());
        assert!(net.forward(&Tensor::zeros([2, 3, 16, 16])).is_err());
        assert!(net.trace((12, 16)).is_err());
    }

    #[test]
    fn non_finite_input_names_the_layer() {
        let net = Network::build(toy(HeadKind::SingleConv), &mut Init::seeded(2)).unwrap();
        let mut x = image(16, 16);
        x.set(0, 0, 3, 3, f32::NAN);
        match net.forward(&x) {
            Err(Error::NonFinite(m)) => assert!(m.starts_with("stem.0"), "{m}"),
            other => panic!("expected a non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn channel_changes_insert_transitions() {
        let mut spec = toy(HeadKind::SingleConv);
        spec.stages[1].channels = vec![6, 8];
        let net = Network::build(spec, &mut Init::seeded(3)).unwrap();
        let names: Vec<_> = net.inventory().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"stage2.transition0.conv.weight".to_string()));
        assert!(names.contains(&"stage2.transition1.conv.weight".to_string()));
        assert!(!names.iter().any(|n| n.starts_with("stage1.transition")));
        assert_eq!(net.forward(&image(16, 16)).unwrap().0.shape(), [1, 3, 4, 4]);
    }

    #[test]
    fn trace_parameters_match_inventory() {
        let net = Network::build(toy(HeadKind::Higher), &mut Init::seeded(4)).unwrap();
        let traced: u64 = net.trace((32, 32)).unwrap().iter().map(|r| r.cost.params).sum();
        assert_eq!(traced as usize, net.num_parameters());
    }

    #[test]
    fn branches_run_at_halving_resolutions() {
        let net = Network::build(NetworkSpec::bhrnet(8), &mut Init::zero()).unwrap();
        for r in net.trace((64, 64)).unwrap() {
            if let Bucket::Resolution(l) = r.bucket {
                if r.name.contains(".block") {
                    assert_eq!(r.input[0], 64 >> (l + 2), "{}", r.name);
                }
            }
        }
    }
}
