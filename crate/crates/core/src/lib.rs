//! Lightweight bottom-up multi-person pose estimation on the CPU.
//!
//! The crate covers the whole inference path of a Dense Inverted Residual
//! (DIR) network on a balanced multi-resolution backbone:
//!
//! - [`tensor`]: NCHW tensors and deterministic convolution kernels.
//! - [`blocks`]: inverted residual variants, cross-resolution fusion, heads.
//! - [`net`]: declarative network configs, construction and forward passes.
//! - [`cost`]: analytic parameter and multiply-accumulate accounting.
//! - [`pose`]: ground-truth rendering, losses with gradients, peak
//!   detection, associative-embedding grouping, flip testing and OKS.
//! - [`synth`]: synthetic scenes and brute-force reference decoders.
//! - [`cli`]: the `bhrnet` command-line front end.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blocks;
pub mod cli;
pub mod cost;
mod error;
pub mod net;
pub mod pose;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
