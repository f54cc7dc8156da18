use super::{join, ConvBn, Init, Parameters};
use crate::cost::{Bucket, LayerKind, Trace};
use crate::error::{shape_err, Result};
use crate::tensor::{add_assign, relu_inplace, upsample_nearest, Tensor};

/// How input branch `i` reaches output branch `j`.
#[derive(Debug, Clone, PartialEq)]
pub enum FusePath {
    /// Same resolution.
    Identity,
    /// Lower to higher resolution: 1×1 conv-bn, then nearest upsampling.
    Upsample { conv: ConvBn, factor: usize },
    /// Higher to lower resolution: one stride-2 3×3 conv-bn per octave, relu
    /// between them but not after the last.
    Downsample(Vec<ConvBn>),
}

impl FusePath {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            FusePath::Identity => Ok(x.clone()),
            FusePath::Upsample { conv, factor } => upsample_nearest(&conv.forward(x)?, *factor),
            FusePath::Downsample(convs) => {
                let mut h = x.clone();
                for (i, c) in convs.iter().enumerate() {
                    h = c.forward(&h)?;
                    if i + 1 < convs.len() {
                        relu_inplace(&mut h);
                    }
                }
                Ok(h)
            }
        }
    }
}

/// Cross-resolution exchange weights: `paths[j][i]` maps input `i` to output `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuseWeights {
    pub channels: Vec<usize>,
    pub paths: Vec<Vec<FusePath>>,
}

impl FuseWeights {
    /// Exchange unit over branches with the given channels, producing the
    /// first `num_outputs` branches.
    pub fn new(channels: &[usize], num_outputs: usize, init: &mut Init) -> Self {
        let paths = (0..num_outputs.min(channels.len()))
            .map(|j| {
                (0..channels.len())
                    .map(|i| match i.cmp(&j) {
                        std::cmp::Ordering::Equal => FusePath::Identity,
                        std::cmp::Ordering::Greater => FusePath::Upsample {
                            conv: ConvBn::standard(init, channels[i], channels[j], 1, 1),
                            factor: 1 << (i - j),
                        },
                        std::cmp::Ordering::Less => FusePath::Downsample(
                            (0..j - i)
                                .map(|step| {
                                    let out = if step + 1 == j - i { channels[j] } else { channels[i] };
                                    ConvBn::standard(init, channels[i], out, 3, 2)
                                })
                                .collect(),
                        ),
                    })
                    .collect()
            })
            .collect();
        Self { channels: channels.to_vec(), paths }
    }

    pub fn num_outputs(&self) -> usize {
        self.paths.len()
    }

    /// Records every path. `level` maps a branch index to its cost bucket;
    /// convolutions are attributed to the resolution they produce.
    pub(crate) fn describe(
        &self,
        name: &str,
        extents: &[(usize, usize)],
        trace: &mut Trace,
        level: &dyn Fn(usize) -> Bucket,
    ) {
        for (j, row) in self.paths.iter().enumerate() {
            for (i, path) in row.iter().enumerate() {
                let n = join(name, &format!("{i}to{j}"));
                match path {
                    FusePath::Identity => {}
                    FusePath::Upsample { conv, factor } => {
                        trace.set_bucket(level(i));
                        let e = conv.describe(&n, extents[i], trace);
                        trace.set_bucket(level(j));
                        trace.push(
                            join(&n, "upsample"),
                            LayerKind::Upsample { channels: conv.out_channels(), factor: *factor },
                            e,
                        );
                    }
                    FusePath::Downsample(convs) => {
                        let mut e = extents[i];
                        for (s, c) in convs.iter().enumerate() {
                            trace.set_bucket(level(i + s + 1));
                            e = c.describe(&join(&n, &format!("down{s}")), e, trace);
                            if s + 1 < convs.len() {
                                trace.push(
                                    join(&n, &format!("down{s}.relu")),
                                    LayerKind::Relu { channels: c.out_channels() },
                                    e,
                                );
                            }
                        }
                    }
                }
            }
            trace.set_bucket(level(j));
            for a in 0..row.len().saturating_sub(1) {
                trace.push(
                    join(name, &format!("out{j}.add{a}")),
                    LayerKind::Add { channels: self.channels[j] },
                    extents[j],
                );
            }
            trace.push(join(name, &format!("out{j}.relu")), LayerKind::Relu { channels: self.channels[j] }, extents[j]);
        }
    }
}

impl Parameters for FuseWeights {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f32])) {
        for (j, row) in self.paths.iter().enumerate() {
            for (i, path) in row.iter().enumerate() {
                let n = join(prefix, &format!("{i}to{j}"));
                match path {
                    FusePath::Identity => {}
                    FusePath::Upsample { conv, .. } => conv.visit(&n, f),
                    FusePath::Downsample(convs) => {
                        for (s, c) in convs.iter().enumerate() {
                            c.visit(&join(&n, &format!("down{s}")), f);
                        }
                    }
                }
            }
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f32])) {
        for (j, row) in self.paths.iter_mut().enumerate() {
            for (i, path) in row.iter_mut().enumerate() {
                let n = join(prefix, &format!("{i}to{j}"));
                match path {
                    FusePath::Identity => {}
                    FusePath::Upsample { conv, .. } => conv.visit_mut(&n, f),
                    FusePath::Downsample(convs) => {
                        for (s, c) in convs.iter_mut().enumerate() {
                            c.visit_mut(&join(&n, &format!("down{s}")), f);
                        }
                    }
                }
            }
        }
    }
}

/// Exchanges information between parallel branches.
///
/// Output `j` is `relu(sum_i path_ij(x_i))`, summed in ascending `i`.
/// Branch `i + 1` must have exactly half the extents of branch `i`.
pub fn fuse_exchange(inputs: &[Tensor], weights: &FuseWeights) -> Result<Vec<Tensor>> {
    if inputs.len() != weights.channels.len() {
        return shape_err(format!("{} branches for an exchange over {}", inputs.len(), weights.channels.len()));
    }
    for (i, x) in inputs.iter().enumerate() {
        if x.channels() != weights.channels[i] {
            return shape_err(format!("branch {i} has {} channels, expected {}", x.channels(), weights.channels[i]));
        }
        if i > 0 {
            let prev = &inputs[i - 1];
            if prev.height() != 2 * x.height() || prev.width() != 2 * x.width() {
                return shape_err(format!(
                    "branch {i} is {}x{}, not half of {}x{}",
                    x.height(),
                    x.width(),
                    prev.height(),
                    prev.width()
                ));
            }
        }
    }
    weights
        .paths
        .iter()
        .map(|row| {
            let mut acc: Option<Tensor> = None;
            for (path, x) in row.iter().zip(inputs) {
                let y = path.forward(x)?;
                match &mut acc {
                    None => acc = Some(y),
                    Some(a) => add_assign(a, &y)?,
                }
            }
            let mut out = acc.expect("at least one branch");
            relu_inplace(&mut out);
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{add, batchnorm_infer, conv2d, relu};

    fn branch(c: usize, h: usize, seed: usize) -> Tensor {
        Tensor::from_fn([1, c, h, h], |_, ch, y, x| ((ch * 13 + y * 7 + x * 3 + seed) % 11) as f32 * 0.2 - 1.0)
    }

    #[test]
    fn single_branch_is_activated_identity() {
        let w = FuseWeights::new(&[3], 1, &mut Init::seeded(1));
        let x = branch(3, 4, 0);
        let out = fuse_exchange(std::slice::from_ref(&x), &w).unwrap();
        assert_eq!(out, vec![relu(&x)]);
    }

    #[test]
    fn zero_cross_weights_keep_own_paths() {
        let w = FuseWeights::new(&[2, 4], 2, &mut Init::zero());
        let xs = [branch(2, 8, 1), branch(4, 4, 2)];
        let out = fuse_exchange(&xs, &w).unwrap();
        assert_eq!(out[0], relu(&xs[0]));
        assert_eq!(out[1], relu(&xs[1]));
    }

    #[test]
    fn two_branch_exchange_matches_composition() {
        let w = FuseWeights::new(&[2, 3], 2, &mut Init::seeded(5));
        let xs = [branch(2, 8, 1), branch(3, 4, 2)];
        let out = fuse_exchange(&xs, &w).unwrap();

        let cb = |x: &Tensor, u: &ConvBn| batchnorm_infer(&conv2d(x, &u.conv).unwrap(), &u.bn).unwrap();
        let FusePath::Upsample { conv: up, factor } = &w.paths[0][1] else { panic!() };
        let FusePath::Downsample(down) = &w.paths[1][0] else { panic!() };
        let hi = relu(&add(&xs[0], &upsample_nearest(&cb(&xs[1], up), *factor).unwrap()).unwrap());
        let lo = relu(&add(&cb(&xs[0], &down[0]), &xs[1]).unwrap());
        assert!(out[0].max_abs_diff(&hi).unwrap() < 1e-6);
        assert!(out[1].max_abs_diff(&lo).unwrap() < 1e-6);
    }

    #[test]
    fn four_branches_route_every_pair() {
        let ch = [2, 3, 4, 5];
        let w = FuseWeights::new(&ch, 4, &mut Init::seeded(2));
        let xs: Vec<_> = ch.iter().enumerate().map(|(i, &c)| branch(c, 16 >> i, i)).collect();
        let out = fuse_exchange(&xs, &w).unwrap();
        for (j, o) in out.iter().enumerate() {
            assert_eq!(o.shape(), xs[j].shape());
        }
        let FusePath::Downsample(d) = &w.paths[3][0] else { panic!() };
        assert_eq!(d.len(), 3);
        assert_eq!(d[0].out_channels(), 2);
        assert_eq!(d[2].out_channels(), 5);
    }

    #[test]
    fn broken_resolution_chain_is_rejected() {
        let w = FuseWeights::new(&[2, 2], 2, &mut Init::zero());
        assert!(fuse_exchange(&[branch(2, 8, 0), branch(2, 8, 0)], &w).is_err());
        assert!(fuse_exchange(&[branch(2, 8, 0), branch(3, 4, 0)], &w).is_err());
    }

    #[test]
    fn final_fusion_keeps_only_requested_outputs() {
        let w = FuseWeights::new(&[2, 3, 4], 1, &mut Init::seeded(4));
        let xs = [branch(2, 8, 0), branch(3, 4, 1), branch(4, 2, 2)];
        let out = fuse_exchange(&xs, &w).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].shape(), [1, 2, 8, 8]);
    }
}
