//! Analytic parameter and multiply-accumulate (MAC) accounting.
//!
//! Costs are a function of structure only. Convolution MACs are the
//! headline number; batchnorm, activation and addition work is reported as
//! `other_ops` and never mixed into MACs. GFLOPs are derived as
//! `2 * MACs / 1e9`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::net::Network;
use crate::tensor::ConvParams;

pub const FLOP_CONVENTION: &str = "GFLOPs = 2 * MACs / 1e9";

/// Structural description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
    },
    ConvTranspose {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
    },
    BatchNorm {
        channels: usize,
    },
    Relu {
        channels: usize,
    },
    Add {
        channels: usize,
    },
    Upsample {
        channels: usize,
        factor: usize,
    },
}

impl LayerKind {
    /// Describes `params` as used by the forward (or transposed) kernel.
    pub fn from_conv(params: &ConvParams, transpose: bool) -> Self {
        let [o, ipg, kh, kw] = params.weight.shape();
        let (stride, padding, groups, bias) = (params.stride, params.padding, params.groups, params.bias.is_some());
        if transpose {
            LayerKind::ConvTranspose {
                in_channels: o,
                out_channels: ipg * groups,
                kernel: [kh, kw],
                stride,
                padding,
                groups,
                bias,
            }
        } else {
            LayerKind::Conv {
                in_channels: ipg * groups,
                out_channels: o,
                kernel: [kh, kw],
                stride,
                padding,
                groups,
                bias,
            }
        }
    }

    /// Square `k`×`k` standard convolution with "same" padding.
    pub fn conv(in_channels: usize, out_channels: usize, k: usize, stride: usize) -> Self {
        LayerKind::Conv { in_channels, out_channels, kernel: [k, k], stride, padding: k / 2, groups: 1, bias: false }
    }

    /// Square `k`×`k` depthwise convolution with "same" padding.
    pub fn depthwise(channels: usize, k: usize, stride: usize) -> Self {
        LayerKind::Conv {
            in_channels: channels,
            out_channels: channels,
            kernel: [k, k],
            stride,
            padding: k / 2,
            groups: channels,
            bias: false,
        }
    }
}

/// Cost of one layer at a given input size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub params: u64,
    pub macs: u64,
    pub other_ops: u64,
    pub output: [usize; 2],
}

fn conv_weights(in_c: usize, out_c: usize, kernel: [usize; 2], groups: usize, per_group_axis_in: bool) -> Result<u64> {
    if groups == 0 || !in_c.is_multiple_of(groups) || !out_c.is_multiple_of(groups) {
        return shape_err(format!("{in_c}->{out_c} channels with {groups} groups"));
    }
    let per_group = if per_group_axis_in { in_c / groups } else { out_c / groups };
    let other = if per_group_axis_in { out_c } else { in_c };
    Ok((other * per_group * kernel[0] * kernel[1]) as u64)
}

/// Parameters, MACs and auxiliary operations of `kind` on an `h`×`w` input.
///
/// Convolutions: `params = Cout * Cin/groups * kH * kW (+ Cout bias)` and
/// `MACs = Hout * Wout * Cout * Cin/groups * kH * kW`. Batchnorm holds `2C`
/// learnable parameters and costs `2HWC` auxiliary operations.
pub fn layer_cost(kind: &LayerKind, extents: (usize, usize)) -> Result<LayerCost> {
    let (h, w) = extents;
    let hw = (h * w) as u64;
    Ok(match *kind {
        LayerKind::Conv { in_channels, out_channels, kernel, stride, padding, groups, bias } => {
            if stride == 0 || h + 2 * padding < kernel[0] || w + 2 * padding < kernel[1] {
                return shape_err(format!("convolution {kind:?} does not fit {h}x{w}"));
            }
            let out = [(h + 2 * padding - kernel[0]) / stride + 1, (w + 2 * padding - kernel[1]) / stride + 1];
            let weights = conv_weights(in_channels, out_channels, kernel, groups, true)?;
            LayerCost {
                params: weights + if bias { out_channels as u64 } else { 0 },
                macs: (out[0] * out[1]) as u64 * weights,
                other_ops: 0,
                output: out,
            }
        }
        LayerKind::ConvTranspose { in_channels, out_channels, kernel, stride, padding, groups, bias } => {
            let full = [(h.max(1) - 1) * stride + kernel[0], (w.max(1) - 1) * stride + kernel[1]];
            if stride == 0 || h == 0 || w == 0 || full[0] <= 2 * padding || full[1] <= 2 * padding {
                return shape_err(format!("transposed convolution {kind:?} does not fit {h}x{w}"));
            }
            let weights = conv_weights(in_channels, out_channels, kernel, groups, false)?;
            LayerCost {
                params: weights + if bias { out_channels as u64 } else { 0 },
                macs: hw * weights,
                other_ops: 0,
                output: [full[0] - 2 * padding, full[1] - 2 * padding],
            }
        }
        LayerKind::BatchNorm { channels } => {
            LayerCost { params: 2 * channels as u64, macs: 0, other_ops: 2 * hw * channels as u64, output: [h, w] }
        }
        LayerKind::Relu { channels } | LayerKind::Add { channels } => {
            LayerCost { params: 0, macs: 0, other_ops: hw * channels as u64, output: [h, w] }
        }
        LayerKind::Upsample { factor, .. } => {
            if factor == 0 {
                return shape_err("upsample factor must be positive");
            }
            LayerCost { params: 0, macs: 0, other_ops: 0, output: [h * factor, w * factor] }
        }
    })
}

/// Cost of a depthwise 3×3 plus a 1×1 standard conv, relative to one
/// standard 3×3 conv of the same width: `1/9 + 1/C`.
pub fn dir_pair_cost_factor(channels: usize, extents: (usize, usize)) -> Result<f64> {
    let standard = layer_cost(&LayerKind::conv(channels, channels, 3, 1), extents)?.macs;
    let dw = layer_cost(&LayerKind::depthwise(channels, 3, 1), extents)?.macs;
    let pw = layer_cost(&LayerKind::conv(channels, channels, 1, 1), extents)?.macs;
    Ok((dw + pw) as f64 / standard as f64)
}

/// Where a layer's cost is attributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Stem,
    /// Branch level `l` runs at `1 / 2^(l + 2)` of the input resolution.
    Resolution(usize),
    Head,
}

impl Bucket {
    pub fn label(&self) -> String {
        match self {
            Bucket::Stem => "stem".into(),
            Bucket::Resolution(l) => format!("1/{}", 1usize << (l + 2)),
            Bucket::Head => "head".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub bucket: Bucket,
    pub layer: LayerKind,
    pub input: [usize; 2],
    #[serde(flatten)]
    pub cost: LayerCost,
}

/// Accumulates layer records while walking a network.
#[derive(Debug)]
pub struct Trace {
    pub records: Vec<LayerRecord>,
    bucket: Bucket,
    error: Option<Error>,
}

impl Default for Trace {
    fn default() -> Self {
        Self { records: Vec::new(), bucket: Bucket::Stem, error: None }
    }
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_bucket(&mut self, bucket: Bucket) {
        self.bucket = bucket;
    }

    /// Records a layer in the current bucket and returns its output extents.
    pub fn push(&mut self, name: String, layer: LayerKind, input: (usize, usize)) -> (usize, usize) {
        match layer_cost(&layer, input) {
            Ok(cost) => {
                let out = (cost.output[0], cost.output[1]);
                self.records.push(LayerRecord { name, bucket: self.bucket, layer, input: [input.0, input.1], cost });
                out
            }
            Err(e) => {
                if self.error.is_none() {
                    self.error = Some(Error::Shape(format!("{name}: {e}")));
                }
                input
            }
        }
    }

    pub fn finish(self) -> Result<Vec<LayerRecord>> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.records),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub bucket: Bucket,
    pub label: String,
    pub params: u64,
    pub macs: u64,
    /// Share of total MACs, in percent.
    pub share_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub network: String,
    pub input: [usize; 2],
    pub flop_convention: String,
    pub total_params: u64,
    pub total_macs: u64,
    pub total_other_ops: u64,
    pub gflops: f64,
    pub buckets: Vec<BucketSummary>,
    pub layers: Vec<LayerRecord>,
}

impl CostReport {
    pub fn from_records(network: &str, input: (usize, usize), layers: Vec<LayerRecord>, levels: usize) -> Self {
        let mut order = vec![Bucket::Stem];
        order.extend((0..levels).map(Bucket::Resolution));
        order.push(Bucket::Head);
        let total_macs: u64 = layers.iter().map(|l| l.cost.macs).sum();
        let buckets = order
            .into_iter()
            .map(|bucket| {
                let (params, macs) = layers
                    .iter()
                    .filter(|l| l.bucket == bucket)
                    .fold((0, 0), |(p, m), l| (p + l.cost.params, m + l.cost.macs));
                let share_pct = if total_macs == 0 { 0.0 } else { 100.0 * macs as f64 / total_macs as f64 };
                BucketSummary { bucket, label: bucket.label(), params, macs, share_pct }
            })
            .collect();
        Self {
            network: network.to_string(),
            input: [input.0, input.1],
            flop_convention: FLOP_CONVENTION.to_string(),
            total_params: layers.iter().map(|l| l.cost.params).sum(),
            total_macs,
            total_other_ops: layers.iter().map(|l| l.cost.other_ops).sum(),
            gflops: 2.0 * total_macs as f64 / 1e9,
            buckets,
            layers,
        }
    }

    /// MAC shares of the resolution buckets only (stem and head excluded),
    /// highest resolution first, summing to 1.
    pub fn resolution_shares(&self) -> Vec<f64> {
        let res: Vec<_> = self.buckets.iter().filter(|b| matches!(b.bucket, Bucket::Resolution(_))).collect();
        let total: u64 = res.iter().map(|b| b.macs).sum();
        res.iter().map(|b| if total == 0 { 0.0 } else { b.macs as f64 / total as f64 }).collect()
    }

    /// Ratio of the largest to the smallest resolution share.
    pub fn share_spread(&self) -> f64 {
        let s = self.resolution_shares();
        let max = s.iter().cloned().fold(f64::MIN, f64::max);
        let min = s.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned plain-text summary: one row per bucket plus totals.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} @ {}x{}", self.network, self.input[0], self.input[1]);
        let _ = writeln!(s, "{:<8} {:>12} {:>16} {:>8}", "bucket", "params", "MACs", "share");
        for b in &self.buckets {
            let _ = writeln!(s, "{:<8} {:>12} {:>16} {:>7.2}%", b.label, b.params, b.macs, b.share_pct);
        }
        let _ = writeln!(s, "{:<8} {:>12} {:>16} {:>7.2}%", "total", self.total_params, self.total_macs, 100.0);
        let _ = writeln!(s, "GFLOPs {:.3} ({})", self.gflops, self.flop_convention);
        s
    }
}

/// Walks the built network and aggregates every layer's cost.
pub fn cost_report(net: &Network, extents: (usize, usize)) -> Result<CostReport> {
    let records = net.trace(extents)?;
    Ok(CostReport::from_records(&net.spec().name, extents, records, net.spec().stages.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_three_by_three_mac_count() {
        let c = layer_cost(&LayerKind::conv(64, 64, 3, 1), (16, 16)).unwrap();
        assert_eq!(c.macs, 16 * 16 * 64 * 64 * 9);
        assert_eq!(c.macs, 9_437_184);
        assert_eq!(c.params, 64 * 64 * 9);
        assert_eq!(c.output, [16, 16]);
    }

    #[test]
    fn depthwise_is_one_over_c_of_standard() {
        let std = layer_cost(&LayerKind::conv(64, 64, 3, 1), (16, 16)).unwrap();
        let dw = layer_cost(&LayerKind::depthwise(64, 3, 1), (16, 16)).unwrap();
        assert_eq!(dw.macs, 147_456);
        assert_eq!(dw.params, 64 * 9);
        assert_eq!(dw.macs * 64, std.macs);
    }

    #[test]
    fn dir_pair_factor_is_ninth_plus_one_over_c() {
        let f = dir_pair_cost_factor(64, (16, 16)).unwrap();
        assert!((f - (1.0 / 9.0 + 1.0 / 64.0)).abs() < 1e-12);
        assert!((f - 0.1268).abs() < 1e-4);
    }

    #[test]
    fn bias_batchnorm_and_elementwise() {
        let k = LayerKind::Conv {
            in_channels: 4,
            out_channels: 6,
            kernel: [1, 1],
            stride: 1,
            padding: 0,
            groups: 1,
            bias: true,
        };
        let c = layer_cost(&k, (5, 5)).unwrap();
        assert_eq!(c.params, 30);
        assert_eq!(c.macs, 25 * 24);
        let bn = layer_cost(&LayerKind::BatchNorm { channels: 8 }, (4, 4)).unwrap();
        assert_eq!((bn.params, bn.macs, bn.other_ops), (16, 0, 256));
        let add = layer_cost(&LayerKind::Add { channels: 8 }, (4, 4)).unwrap();
        assert_eq!((add.params, add.macs), (0, 0));
        let up = layer_cost(&LayerKind::Upsample { channels: 8, factor: 4 }, (4, 4)).unwrap();
        assert_eq!(up.output, [16, 16]);
    }

    #[test]
    fn transposed_conv_counts_input_pixels() {
        let k = LayerKind::ConvTranspose {
            in_channels: 8,
            out_channels: 8,
            kernel: [4, 4],
            stride: 2,
            padding: 1,
            groups: 1,
            bias: false,
        };
        let c = layer_cost(&k, (16, 16)).unwrap();
        assert_eq!(c.output, [32, 32]);
        assert_eq!(c.macs, 16 * 16 * 8 * 8 * 16);
    }

    #[test]
    fn unknown_kind_fails_to_parse() {
        let parsed: std::result::Result<LayerKind, _> = serde_json::from_str(r#"{"kind":"pool","channels":3}"#);
        assert!(parsed.is_err());
        let ok: LayerKind = serde_json::from_str(r#"{"kind":"batch_norm","channels":3}"#).unwrap();
        assert_eq!(ok, LayerKind::BatchNorm { channels: 3 });
    }

    #[test]
    fn invalid_geometry_is_an_error() {
        let wide = LayerKind::Conv {
            in_channels: 3,
            out_channels: 4,
            kernel: [5, 5],
            stride: 1,
            padding: 0,
            groups: 1,
            bias: false,
        };
        assert!(layer_cost(&wide, (3, 3)).is_err());
        let k = LayerKind::Conv {
            in_channels: 3,
            out_channels: 4,
            kernel: [3, 3],
            stride: 1,
            padding: 1,
            groups: 2,
            bias: false,
        };
        assert!(layer_cost(&k, (4, 4)).is_err());
    }
}
