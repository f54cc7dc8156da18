//! Dense NCHW tensors and the inference kernels used by every layer.
//!
//! All kernels are single-threaded with a fixed accumulation order, so the
//! same inputs always give bit-identical outputs.

mod conv;
mod elementwise;
mod norm;
pub mod raw;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

pub use conv::{conv2d, conv_transpose2d, depthwise_conv2d, ConvParams};
pub use elementwise::{
    add, add_assign, elementwise, mirror_width, relu, relu_inplace, scale, upsample_nearest, Elementwise,
};
pub use norm::{batchnorm_infer, fold_batchnorm, BatchNormParams};

/// A 4-D dense array of `f32` laid out as (batch, channels, height, width),
/// width fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return shape_err(format!(
                "data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                len
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: [usize; 4], value: f32) -> Self {
        Self { shape, data: vec![value; shape.iter().product()] }
    }

    /// Builds a tensor by evaluating `f(n, c, y, x)` for every element.
    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.iter().product());
        for n in 0..shape[0] {
            for c in 0..shape[1] {
                for y in 0..shape[2] {
                    for x in 0..shape[3] {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, value: f32) {
        let i = self.index(n, c, y, x);
        self.data[i] = value;
    }

    /// One H×W plane.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let len = self.shape[2] * self.shape[3];
        let start = self.index(n, c, 0, 0);
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let len = self.shape[2] * self.shape[3];
        let start = self.index(n, c, 0, 0);
        &mut self.data[start..start + len]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute element-wise difference; errors on shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32> {
        if self.shape != other.shape {
            return shape_err(format!("{:?} vs {:?}", self.shape, other.shape));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max))
    }

    /// Channels `[start, end)` of every batch item.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Tensor> {
        if start > end || end > self.shape[1] {
            return shape_err(format!("channel range {start}..{end} out of {}", self.shape[1]));
        }
        let [n, _, h, w] = self.shape;
        let mut out = Tensor::zeros([n, end - start, h, w]);
        for b in 0..n {
            for c in start..end {
                out.plane_mut(b, c - start).copy_from_slice(self.plane(b, c));
            }
        }
        Ok(out)
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::Shape("nothing to concatenate".into()))?;
        let [n, _, h, w] = first.shape;
        if parts.iter().any(|t| t.shape[0] != n || t.shape[2] != h || t.shape[3] != w) {
            return shape_err("concatenated tensors differ outside the channel axis");
        }
        let total: usize = parts.iter().map(|t| t.shape[1]).sum();
        let mut out = Tensor::zeros([n, total, h, w]);
        for b in 0..n {
            let mut offset = 0;
            for t in parts {
                for c in 0..t.shape[1] {
                    out.plane_mut(b, offset + c).copy_from_slice(t.plane(b, c));
                }
                offset += t.shape[1];
            }
        }
        Ok(out)
    }

    pub(crate) fn ensure_finite(self, op: &str) -> Result<Tensor> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(op.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_must_match_shape() {
        assert!(Tensor::new([1, 2, 2, 2], vec![0.0; 8]).is_ok());
        assert!(matches!(Tensor::new([1, 2, 2, 2], vec![0.0; 7]), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_extents_are_allowed() {
        let t = Tensor::zeros([0, 3, 4, 4]);
        assert!(t.is_empty());
    }

    #[test]
    fn index_is_row_major_width_fastest() {
        let t = Tensor::from_fn([2, 3, 4, 5], |n, c, y, x| (n * 1000 + c * 100 + y * 10 + x) as f32);
        assert_eq!(t.data()[1], 1.0);
        assert_eq!(t.data()[5], 10.0);
        assert_eq!(t.at(1, 2, 3, 4), 1234.0);
    }

    #[test]
    fn slice_and_concat_are_inverse() {
        let t = Tensor::from_fn([1, 6, 2, 3], |_, c, y, x| (c * 6 + y * 3 + x) as f32);
        let a = t.slice_channels(0, 2).unwrap();
        let b = t.slice_channels(2, 6).unwrap();
        assert_eq!(Tensor::concat_channels(&[&a, &b]).unwrap(), t);
    }
}
