use serde::{Deserialize, Serialize};

use super::{ConvParams, Tensor};
use crate::error::{shape_err, Result};

/// Frozen batch-normalisation statistics and affine parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub mean: Vec<f32>,
    pub variance: Vec<f32>,
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
    pub epsilon: f32,
}

impl BatchNormParams {
    /// mean 0, variance 1, scale 1, shift 0 and epsilon 0: an exact identity.
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            variance: vec![1.0; channels],
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
            epsilon: 0.0,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn validate(&self) -> Result<()> {
        let c = self.mean.len();
        if self.variance.len() != c || self.scale.len() != c || self.shift.len() != c {
            return shape_err("batchnorm vectors differ in length");
        }
        if self.variance.iter().any(|v| !(*v >= 0.0)) {
            return shape_err("batchnorm variance must be non-negative");
        }
        if !(self.epsilon >= 0.0) {
            return shape_err("batchnorm epsilon must be non-negative");
        }
        Ok(())
    }

    /// Per-channel `(multiplier, offset)` such that `y = x * m + o`.
    pub fn affine(&self) -> Vec<(f32, f32)> {
        (0..self.channels())
            .map(|c| {
                let m = self.scale[c] / (self.variance[c] + self.epsilon).sqrt();
                (m, self.shift[c] - self.mean[c] * m)
            })
            .collect()
    }
}

/// `y = (x - mean) / sqrt(variance + epsilon) * scale + shift`, per channel.
pub fn batchnorm_infer(input: &Tensor, params: &BatchNormParams) -> Result<Tensor> {
    params.validate()?;
    if input.channels() != params.channels() {
        return shape_err(format!("batchnorm has {} channels, input has {}", params.channels(), input.channels()));
    }
    let mut out = input.clone();
    for n in 0..input.batch() {
        for c in 0..input.channels() {
            let inv = 1.0 / (params.variance[c] + params.epsilon).sqrt();
            let (mean, scale, shift) = (params.mean[c], params.scale[c], params.shift[c]);
            for v in out.plane_mut(n, c) {
                *v = (*v - mean) * inv * scale + shift;
            }
        }
    }
    out.ensure_finite("batchnorm_infer")
}

/// Folds `bn(conv(x))` into a single convolution with bias.
pub fn fold_batchnorm(conv: &ConvParams, bn: &BatchNormParams) -> Result<ConvParams> {
    bn.validate()?;
    let cout = conv.out_channels();
    if bn.channels() != cout {
        return shape_err("batchnorm channels differ from convolution outputs");
    }
    let affine = bn.affine();
    let per_out = conv.weight.len() / cout.max(1);
    let mut weight = conv.weight.clone();
    for (o, chunk) in weight.data_mut().chunks_mut(per_out).enumerate() {
        for v in chunk {
            *v *= affine[o].0;
        }
    }
    let bias = (0..cout).map(|o| conv.bias.as_ref().map_or(0.0, |b| b[o]) * affine[o].0 + affine[o].1).collect();
    Ok(ConvParams { weight, bias: Some(bias), ..conv.clone() })
}
