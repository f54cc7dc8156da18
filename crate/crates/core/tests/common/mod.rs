//! Naive reference implementations shared by the integration tests.
//!
//! Every oracle loops over output coordinates in the most literal way and
//! accumulates in `f64`.

#![allow(dead_code)]

use bhrnet::tensor::{BatchNormParams, ConvParams, Tensor};
use rand::Rng;

/// Mixed tolerance `|a - b| <= tol * (1 + |b|)` used for every kernel comparison.
pub fn close(actual: &Tensor, expected: &[f64], tol: f64) -> Result<(), String> {
    if actual.len() != expected.len() {
        return Err(format!("length {} vs {}", actual.len(), expected.len()));
    }
    for (i, (&a, &e)) in actual.data().iter().zip(expected).enumerate() {
        if (a as f64 - e).abs() > tol * (1.0 + e.abs()) {
            return Err(format!("element {i}: {a} vs {e}"));
        }
    }
    Ok(())
}

pub fn random_tensor(rng: &mut impl Rng, shape: [usize; 4]) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0))
}

pub fn conv_oracle(x: &Tensor, p: &ConvParams) -> Vec<f64> {
    let [n, _, h, w] = x.shape();
    let [cout, ipg, kh, kw] = p.weight.shape();
    let (s, pad) = (p.stride as isize, p.padding as isize);
    let oh = (h as isize + 2 * pad - kh as isize) / s + 1;
    let ow = (w as isize + 2 * pad - kw as isize) / s + 1;
    let opg = cout / p.groups;
    let mut out = Vec::new();
    for b in 0..n {
        for oc in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = p.bias.as_ref().map_or(0.0, |v| v[oc] as f64);
                    for icg in 0..ipg {
                        let ic = (oc / opg) * ipg + icg;
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = oy * s + ky as isize - pad;
                                let ix = ox * s + kx as isize - pad;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc +=
                                    p.weight.at(oc, icg, ky, kx) as f64 * x.at(b, ic, iy as usize, ix as usize) as f64;
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// Scatters every input pixel through the kernel, then crops the padding.
pub fn conv_transpose_oracle(x: &Tensor, p: &ConvParams) -> Vec<f64> {
    let [n, cin, h, w] = x.shape();
    let [_, ipg, kh, kw] = p.weight.shape();
    let (s, pad) = (p.stride, p.padding);
    let cout = ipg * p.groups;
    let opg = cin / p.groups;
    let (fh, fw) = ((h - 1) * s + kh, (w - 1) * s + kw);
    let (oh, ow) = (fh - 2 * pad, fw - 2 * pad);
    let mut full = vec![0.0f64; n * cout * fh * fw];
    for b in 0..n {
        for src in 0..cin {
            let group = src / opg;
            for icg in 0..ipg {
                let oc = group * ipg + icg;
                for iy in 0..h {
                    for ix in 0..w {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let (y, xx) = (iy * s + ky, ix * s + kx);
                                full[((b * cout + oc) * fh + y) * fw + xx] +=
                                    p.weight.at(src, icg, ky, kx) as f64 * x.at(b, src, iy, ix) as f64;
                            }
                        }
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    for b in 0..n {
        for oc in 0..cout {
            for y in 0..oh {
                for xx in 0..ow {
                    let bias = p.bias.as_ref().map_or(0.0, |v| v[oc] as f64);
                    out.push(full[((b * cout + oc) * fh + y + pad) * fw + xx + pad] + bias);
                }
            }
        }
    }
    out
}

pub fn batchnorm_oracle(x: &Tensor, bn: &BatchNormParams) -> Vec<f64> {
    let [n, c, h, w] = x.shape();
    let mut out = Vec::new();
    for b in 0..n {
        for ch in 0..c {
            let denom = (bn.variance[ch] as f64 + bn.epsilon as f64).sqrt();
            for y in 0..h {
                for xx in 0..w {
                    let v = x.at(b, ch, y, xx) as f64;
                    out.push((v - bn.mean[ch] as f64) / denom * bn.scale[ch] as f64 + bn.shift[ch] as f64);
                }
            }
        }
    }
    out
}

pub fn upsample_oracle(x: &Tensor, f: usize) -> Vec<f64> {
    let [n, c, h, w] = x.shape();
    let mut out = Vec::new();
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h * f {
                for xx in 0..w * f {
                    out.push(x.at(b, ch, y / f, xx / f) as f64);
                }
            }
        }
    }
    out
}

pub fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| *x as f64 * *y as f64).sum()
}

/// A random convolution on extents and channel counts of at most 8 whose
/// transpose maps its output extents back to the input extents exactly.
pub struct ConvCase {
    pub input: Tensor,
    pub params: ConvParams,
}

pub fn random_conv_case(rng: &mut impl Rng, depthwise: bool) -> ConvCase {
    let k = [1, 2, 3][rng.gen_range(0..3)];
    let stride = rng.gen_range(1..=k.min(2));
    let padding = rng.gen_range(0..=k / 2);
    let (h, w) = loop {
        let (oh, ow) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let h = ((oh - 1) * stride + k) as isize - 2 * padding as isize;
        let w = ((ow - 1) * stride + k) as isize - 2 * padding as isize;
        if (1..=8).contains(&h) && (1..=8).contains(&w) {
            break (h as usize, w as usize);
        }
    };
    let (cin, cout, groups) = if depthwise {
        let c = rng.gen_range(1..=6);
        (c, c, c)
    } else {
        let groups = rng.gen_range(1..=2);
        (groups * rng.gen_range(1..=3), groups * rng.gen_range(1..=3), groups)
    };
    let batch = rng.gen_range(1..=2);
    let input = random_tensor(rng, [batch, cin, h, w]);
    let weight = random_tensor(rng, [cout, cin / groups, k, k]);
    let mut params = ConvParams::new(weight, stride, padding, groups);
    if rng.gen_bool(0.5) {
        params = params.with_bias((0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    ConvCase { input, params }
}

pub fn random_batchnorm(rng: &mut impl Rng, c: usize) -> BatchNormParams {
    BatchNormParams {
        mean: (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        variance: (0..c).map(|_| rng.gen_range(0.1..2.0)).collect(),
        scale: (0..c).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        shift: (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        epsilon: 1e-5,
    }
}

/// The weighted loss written out directly from its definition.
pub fn loss_oracle(
    heat: &bhrnet::pose::Grid,
    tags: &bhrnet::pose::Grid,
    gt_heat: &bhrnet::pose::Grid,
    gt: &bhrnet::pose::PoseSet,
    alpha: f64,
    beta: f64,
    push_sigma: f64,
) -> f64 {
    let [_, k, h, w] = heat.shape;
    let mut sq = 0.0;
    for c in 0..k {
        for y in 0..h {
            for x in 0..w {
                sq += (heat.at(c, y, x) - gt_heat.at(c, y, x)).powi(2);
            }
        }
    }
    let lh = sq / (k * h * w) as f64;

    let mut samples: Vec<Vec<f64>> = Vec::new();
    for inst in &gt.instances {
        let mut t = Vec::new();
        for (c, kp) in inst.keypoints.iter().enumerate() {
            if let Some(kp) = kp {
                t.push(tags.at(c, kp.y.round() as usize, kp.x.round() as usize));
            }
        }
        if !t.is_empty() {
            samples.push(t);
        }
    }
    let n = samples.len() as f64;
    let means: Vec<f64> = samples.iter().map(|t| t.iter().sum::<f64>() / t.len() as f64).collect();
    let mut pull = 0.0;
    for (t, m) in samples.iter().zip(&means) {
        for v in t {
            pull += (v - m).powi(2);
        }
    }
    let mut push = 0.0;
    for a in 0..means.len() {
        for b in 0..means.len() {
            if a != b {
                push += (-(means[a] - means[b]).powi(2) / (2.0 * push_sigma * push_sigma)).exp();
            }
        }
    }
    alpha * lh + beta * (pull / n + push / (n * n))
}
